use std::collections::BTreeSet;

use serde::Deserialize;
use vocada_core::io::{read_jsonl, read_vocabulary};
use vocada_core::selector::{parse_llm_selection, SelectorConfig};
use vocada_core::{ClassId, SelectorKind};

#[derive(Deserialize)]
struct Case {
    name: String,
    raw: String,
    expected: Vec<u32>,
    fallback_used: bool,
    unmatched: usize,
}

fn dir() -> std::path::PathBuf {
    vocada_testkit::fixtures_dir().join("llm")
}

fn llm(fallback: bool) -> SelectorConfig {
    SelectorConfig {
        kind: SelectorKind::Llm,
        fallback_on_empty: fallback,
        ..Default::default()
    }
}

#[test]
fn corpus_maps_to_expected_sets() {
    let vocab = read_vocabulary(&dir().join("vocabulary.json")).unwrap();
    let cases: Vec<Case> = read_jsonl(&dir().join("corpus.jsonl")).unwrap();
    assert_eq!(cases.len(), 20);
    for case in &cases {
        let sel = parse_llm_selection(&case.name, &case.raw, &vocab, &llm(true));
        let want: BTreeSet<ClassId> = case.expected.iter().map(|&i| ClassId(i)).collect();
        assert_eq!(sel.adapted.class_ids, want, "{}", case.name);
        assert_eq!(sel.adapted.fallback_used, case.fallback_used, "{}", case.name);
        assert_eq!(sel.unmatched.len(), case.unmatched, "{}", case.name);
        assert_eq!(sel.adapted.selector, SelectorKind::Llm);
    }
}

#[test]
fn without_fallback_empty_selections_stay_empty() {
    let vocab = read_vocabulary(&dir().join("vocabulary.json")).unwrap();
    let cases: Vec<Case> = read_jsonl(&dir().join("corpus.jsonl")).unwrap();
    for case in cases.iter().filter(|c| c.fallback_used) {
        let sel = parse_llm_selection(&case.name, &case.raw, &vocab, &llm(false));
        assert!(sel.adapted.class_ids.is_empty(), "{}", case.name);
        assert!(!sel.adapted.fallback_used);
    }
}
