mod common;

use std::fs;

use common::check_golden;
use vocada_cli::commands::cmd_extract_nouns;
use vocada_cli::RunConfig;
use vocada_core::io::read_jsonl;
use vocada_core::NounPhraseSet;

/// Phrases worked out by hand from the chunk grammar and the bundled lexicon.
const EXPECTED: [&[&str]; 25] = [
    &["man", "bicycle"],
    &["plastic containers", "kitchen counter"],
    &["cluster", "red apples", "wooden bowl"],
    &[],
    &["man", "bicycle"],
    &["dogs", "frisbee", "beach"],
    // "red-striped" takes the -ed verb rule
    &["umbrella", "white plastic chair"],
    &["cat", "couch", "tv", "movie"],
    &["young woman", "large black umbrella", "rain"],
    &["people", "bus stop", "night"],
    &["curling stone", "ice"],
    &["bowl", "fresh fruit", "bananas", "oranges", "grapes"],
    &["old man's hat", "park bench"],
    &["giraffe", "tall trees"],
    &["laptop", "cup", "coffee", "notebook", "desk"],
    // "flies" is a noun in the lexicon
    &["beautiful colorful kite flies", "green field"],
    &["baseball players", "home plate"],
    &["small brown dog", "tennis ball", "grass"],
    &["fire hydrant", "sidewalk"],
    &["stop sign", "tree"],
    &["cars", "trucks", "busy highway"],
    &["chef", "white uniform", "vegetables"],
    // six-token run truncated from the left
    &["old brick clock tower", "town"],
    &["plate", "sandwich", "french fries"],
    &["surfers", "waves", "lifeguard watches", "tower"],
];

fn dir() -> std::path::PathBuf {
    vocada_testkit::fixtures_dir().join("nouns")
}

fn run(threads: usize) -> Vec<u8> {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = RunConfig::default();
    cfg.paths.captions = Some(dir().join("captions.jsonl"));
    cfg.concurrency = threads;
    cmd_extract_nouns(&cfg, &tmp.path().join("nouns.jsonl")).unwrap();
    fs::read(tmp.path().join("nouns.jsonl")).unwrap()
}

#[test]
fn golden_is_byte_exact() {
    check_golden(&dir().join("nouns.jsonl"), &run(1));
}

#[test]
fn golden_matches_hand_derivation() {
    let sets: Vec<NounPhraseSet> = read_jsonl(&dir().join("nouns.jsonl")).unwrap();
    assert_eq!(sets.len(), 25);
    for (i, (set, want)) in sets.iter().zip(EXPECTED).enumerate() {
        assert_eq!(set.image_id, format!("c{:02}", i + 1));
        assert_eq!(set.phrases, want.to_vec(), "{}", set.image_id);
    }
}

#[test]
fn eight_workers_match_one() {
    let one = run(1);
    for _ in 0..3 {
        assert_eq!(run(8), one);
    }
}
