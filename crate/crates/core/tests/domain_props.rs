use std::collections::HashMap;

use proptest::prelude::*;
use vocada_core::{normalize_name, validate_vocabulary, ClassEntry, ClassId, Vocabulary};

fn messy_string() -> impl Strategy<Value = String> {
    // letters, case, whitespace runs, and combining accents
    proptest::collection::vec(
        prop_oneof![
            Just("a"),
            Just("B"),
            Just("é"),
            Just("e\u{301}"),
            Just("\u{301}"),
            Just("Ω"),
            Just("ß"),
            Just("İ"),
            Just(" "),
            Just("  "),
            Just("\t"),
            Just("\n"),
            Just("TV"),
            Just("-"),
        ],
        0..12,
    )
    .prop_map(|parts| parts.concat())
}

proptest! {
    #[test]
    fn normalize_is_idempotent(s in messy_string()) {
        let once = normalize_name(&s);
        prop_assert_eq!(normalize_name(&once), once.clone());
        prop_assert!(!once.starts_with(' ') && !once.ends_with(' '));
        prop_assert!(!once.contains("  "));
    }

    #[test]
    fn normalize_is_idempotent_on_any_text(s in "\\PC{0,24}") {
        let once = normalize_name(&s);
        prop_assert_eq!(normalize_name(&once), once);
    }

    #[test]
    fn valid_vocabularies_map_surfaces_injectively(
        raw in proptest::collection::vec(
            (messy_string(), proptest::collection::vec(messy_string(), 0..3)),
            1..6,
        )
    ) {
        let classes: Vec<ClassEntry> = raw
            .iter()
            .enumerate()
            .map(|(i, (name, syns))| ClassEntry {
                id: ClassId(i as u32 + 1),
                name: name.clone(),
                synonyms: syns.clone(),
            })
            .collect();
        if validate_vocabulary(&classes).is_ok() {
            let vocab = Vocabulary::new("v", classes.clone()).unwrap();
            let mut owner: HashMap<String, ClassId> = HashMap::new();
            for c in &classes {
                for s in std::iter::once(&c.name).chain(&c.synonyms) {
                    let key = normalize_name(s);
                    if key.is_empty() {
                        // blank synonyms are ignored
                        prop_assert_eq!(vocab.lookup(s), None);
                        continue;
                    }
                    if let Some(prev) = owner.insert(key.clone(), c.id) {
                        prop_assert_eq!(prev, c.id, "surface {} owned twice", key);
                    }
                    prop_assert_eq!(vocab.lookup(s), Some(c.id));
                }
            }
        } else {
            prop_assert!(Vocabulary::new("v", classes).is_err());
        }
    }
}

proptest! {
    #[test]
    fn detection_lines_round_trip_exactly(
        score in any::<f64>().prop_filter("finite", |s| s.is_finite()),
        corner in proptest::array::uniform4(-1e6f64..1e6),
        class in any::<u32>(),
    ) {
        let det = vocada_core::Detection {
            image_id: "img".into(),
            bbox: vocada_core::BBox::from(corner),
            class_id: ClassId(class),
            score,
        };
        let text = vocada_core::io::to_jsonl(std::slice::from_ref(&det));
        let back: Vec<vocada_core::Detection> = vocada_core::io::parse_jsonl(&text, std::path::Path::new("mem")).unwrap();
        prop_assert_eq!(&back[0], &det);
        prop_assert_eq!(vocada_core::io::to_jsonl(&back), text);
    }
}
