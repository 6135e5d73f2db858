use std::collections::BTreeSet;
use std::sync::OnceLock;

use proptest::prelude::*;
use vocada_core::nouns::{extract, tag, tokenize, TaggedToken, MAX_PHRASE_TOKENS};
use vocada_core::{normalize_name, CaptionRecord, Tag, TagLexicon};

const WORDS: &[&str] = &[
    "a", "the", "two", "red", "large", "wooden", "man", "dog", "bicycle", "riding", "near", "and", "of", "plastic",
    "containers", "ice", "rink", "cluster", "apples", "quickly", "famous", "stone", "curling", "3", "it", "on",
    "beautiful", "kite", "sky", "blue", "Baseball", "bat", "player's", "t-shirt",
];

const PUNCT: &[&str] = &["", "", "", "", ",", ".", ";", ":", "!", "?", ")", "\""];

fn sentence() -> impl Strategy<Value = String> {
    proptest::collection::vec((0..WORDS.len(), 0..PUNCT.len()), 0..14).prop_map(|ws| {
        ws.into_iter()
            .map(|(w, p)| format!("{}{}", WORDS[w], PUNCT[p]))
            .collect::<Vec<_>>()
            .join(" ")
    })
}

fn lexicon() -> &'static TagLexicon {
    static LEX: OnceLock<TagLexicon> = OnceLock::new();
    LEX.get_or_init(TagLexicon::default_english)
}

fn record(text: &str) -> CaptionRecord {
    CaptionRecord {
        image_id: "img".into(),
        caption: text.into(),
        source: "file".into(),
    }
}

/// Position of `phrase` as a run of consecutive tokens, if any.
fn find_run<'a>(tagged: &'a [TaggedToken], phrase: &str) -> Option<&'a [TaggedToken]> {
    let n = phrase.split(' ').count();
    tagged
        .windows(n)
        .find(|w| normalize_name(&w.iter().map(|t| t.text.as_str()).collect::<Vec<_>>().join(" ")) == phrase)
}

proptest! {
    #[test]
    fn extraction_is_deterministic(s in sentence()) {
        let lex = lexicon();
        let a = serde_json::to_string(&extract(&record(&s), lex)).unwrap();
        let b = serde_json::to_string(&extract(&record(&s), lex)).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn phrases_are_adjective_noun_runs(s in sentence()) {
        let lex = lexicon();
        let tagged = tag(&tokenize(&s), lex);
        let out = extract(&record(&s), lex);
        for p in &out.phrases {
            let run = find_run(&tagged, p);
            prop_assert!(run.is_some(), "{:?} is not a contiguous token run of {:?}", p, s);
            let run = run.unwrap();
            prop_assert!(run.len() <= MAX_PHRASE_TOKENS);
            prop_assert!(run.iter().all(|t| matches!(t.tag, Tag::Adj | Tag::Noun)));
            prop_assert_eq!(run.last().unwrap().tag, Tag::Noun);
        }
    }

    #[test]
    fn phrases_are_unique_and_nonempty(s in sentence()) {
        let out = extract(&record(&s), lexicon());
        let set: BTreeSet<&String> = out.phrases.iter().collect();
        prop_assert_eq!(set.len(), out.phrases.len());
        prop_assert!(out.phrases.iter().all(|p| !p.trim().is_empty()));
    }

    #[test]
    fn concatenation_only_adds_phrases(a in sentence(), b in sentence(), end in prop_oneof![Just("."), Just("!"), Just("?")]) {
        let lex = lexicon();
        let a = format!("{a}{end}");
        let joined = format!("{a}. {b}");
        let before: BTreeSet<String> = extract(&record(&a), lex).phrases.into_iter().collect();
        let after: BTreeSet<String> = extract(&record(&joined), lex).phrases.into_iter().collect();
        prop_assert!(before.is_subset(&after), "{:?} lost {:?}", joined, before.difference(&after).collect::<Vec<_>>());
    }

    #[test]
    fn token_spans_index_the_caption(s in sentence()) {
        let toks = tokenize(&s);
        let mut last_end = 0;
        for t in &toks {
            prop_assert!(t.span.0 >= last_end && t.span.0 < t.span.1);
            prop_assert_eq!(&s[t.span.0..t.span.1], t.text.as_str());
            last_end = t.span.1;
        }
    }
}
