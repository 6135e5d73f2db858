//! Rule-based noun-phrase extraction from captions.
//!
//! Captions go through three deterministic steps: whitespace tokenization
//! with punctuation stripping, lexicon-plus-suffix part-of-speech tagging,
//! and a regular chunk grammar `ADJ* NOUN+` over the tagged sequence.
//! Chunks never cross clause punctuation, so concatenating two sentences can
//! only add phrases.

mod lexicon;

pub use lexicon::{Tag, TagLexicon};

use crate::domain::{normalize_name, CaptionRecord, NounPhraseSet};

/// Longest phrase emitted, in tokens. Longer runs lose their leftmost tokens.
pub const MAX_PHRASE_TOKENS: usize = 4;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub text: String,
    /// Byte offsets into the caption.
    pub span: (usize, usize),
    /// Clause punctuation follows this token, so no chunk may extend past it.
    pub boundary_after: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TaggedToken {
    pub text: String,
    pub tag: Tag,
    pub span: (usize, usize),
    pub boundary_after: bool,
}

fn is_clause_punct(c: char) -> bool {
    matches!(
        c,
        '.' | ',' | ';' | ':' | '!' | '?' | '(' | ')' | '[' | ']' | '{' | '}' | '…' | '—' | '–' | '/'
    )
}

/// Splits on whitespace and peels leading/trailing punctuation off each piece.
/// Hyphens and apostrophes inside a word stay in the token.
pub fn tokenize(caption: &str) -> Vec<Token> {
    let mut tokens: Vec<Token> = Vec::new();
    let mut pieces = Vec::new();
    let mut start = None;
    for (i, c) in caption.char_indices() {
        if c.is_whitespace() {
            if let Some(s) = start.take() {
                pieces.push((s, i));
            }
        } else if start.is_none() {
            start = Some(i);
        }
    }
    if let Some(s) = start {
        pieces.push((s, caption.len()));
    }

    for (s, e) in pieces {
        let piece = &caption[s..e];
        let first = piece.char_indices().find(|(_, c)| c.is_alphanumeric());
        let Some((lead, _)) = first else {
            if piece.chars().any(is_clause_punct) {
                if let Some(prev) = tokens.last_mut() {
                    prev.boundary_after = true;
                }
            }
            continue;
        };
        let (last, last_char) = piece
            .char_indices()
            .rev()
            .find(|(_, c)| c.is_alphanumeric())
            .expect("an alphanumeric char exists");
        let end = last + last_char.len_utf8();
        if piece[..lead].chars().any(is_clause_punct) {
            if let Some(prev) = tokens.last_mut() {
                prev.boundary_after = true;
            }
        }
        tokens.push(Token {
            text: piece[lead..end].to_string(),
            span: (s + lead, s + end),
            boundary_after: piece[end..].chars().any(is_clause_punct),
        });
    }
    tokens
}

/// Lexicon lookup, then suffix heuristics for unknown words.
pub fn tag_word(word: &str, lexicon: &TagLexicon) -> Tag {
    let norm = normalize_name(word);
    if let Some(tag) = lexicon.get(&norm) {
        return tag;
    }
    if norm.chars().any(|c| c.is_ascii_digit())
        && norm.chars().all(|c| c.is_ascii_digit() || matches!(c, '.' | ',' | '-' | '/'))
    {
        return Tag::Num;
    }
    let has = |suffix: &str| norm.len() > suffix.len() && norm.ends_with(suffix);
    if has("ing") || has("ed") {
        Tag::Verb
    } else if has("ly") {
        Tag::Other
    } else if has("ous") || has("ful") || has("ish") || has("al") {
        Tag::Adj
    } else {
        Tag::Noun
    }
}

pub fn tag(tokens: &[Token], lexicon: &TagLexicon) -> Vec<TaggedToken> {
    tokens
        .iter()
        .map(|t| TaggedToken {
            text: t.text.clone(),
            tag: tag_word(&t.text, lexicon),
            span: t.span,
            boundary_after: t.boundary_after,
        })
        .collect()
}

/// Maximal `ADJ* NOUN+` matches, in text order.
pub fn chunk_noun_phrases(tagged: &[TaggedToken]) -> Vec<String> {
    let mut phrases = Vec::new();
    let mut run: Vec<&TaggedToken> = Vec::new();
    for tok in tagged {
        if matches!(tok.tag, Tag::Adj | Tag::Noun) {
            run.push(tok);
            if tok.boundary_after {
                flush_run(&run, &mut phrases);
                run.clear();
            }
        } else {
            flush_run(&run, &mut phrases);
            run.clear();
        }
    }
    flush_run(&run, &mut phrases);
    phrases
}

fn flush_run(run: &[&TaggedToken], phrases: &mut Vec<String>) {
    let mut i = 0;
    while i < run.len() {
        let start = i;
        while i < run.len() && run[i].tag == Tag::Adj {
            i += 1;
        }
        let nouns_start = i;
        while i < run.len() && run[i].tag == Tag::Noun {
            i += 1;
        }
        if i == nouns_start {
            // adjectives with no head noun
            break;
        }
        let from = start.max(i.saturating_sub(MAX_PHRASE_TOKENS));
        let text = run[from..i].iter().map(|t| t.text.as_str()).collect::<Vec<_>>().join(" ");
        phrases.push(normalize_name(&text));
    }
}

pub fn extract(caption: &CaptionRecord, lexicon: &TagLexicon) -> NounPhraseSet {
    let tagged = tag(&tokenize(&caption.caption), lexicon);
    NounPhraseSet::new(caption.image_id.clone(), chunk_noun_phrases(&tagged))
}
