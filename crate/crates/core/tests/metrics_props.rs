use std::collections::BTreeMap;

use proptest::prelude::*;
use vocada_core::metrics::{average_precision, coco_thresholds, evaluate, iou};
use vocada_core::{BBox, ClassEntry, ClassId, Detection, GroundTruthBox, Interpolation, Vocabulary};

fn bbox() -> impl Strategy<Value = BBox> {
    (0.0f64..50.0, 0.0f64..50.0, 0.5f64..30.0, 0.5f64..30.0).prop_map(|(x, y, w, h)| BBox::from_xywh(x, y, w, h))
}

fn flags() -> impl Strategy<Value = Vec<bool>> {
    proptest::collection::vec(any::<bool>(), 0..15)
}

fn ranked(flags: &[bool]) -> Vec<(f64, bool)> {
    flags.iter().enumerate().map(|(i, &f)| (1.0 - i as f64 * 0.01, f)).collect()
}

proptest! {
    #[test]
    fn iou_is_symmetric_and_bounded(a in bbox(), b in bbox()) {
        let ab = iou(&a, &b);
        prop_assert_eq!(ab, iou(&b, &a));
        prop_assert!((0.0..=1.0).contains(&ab));
        prop_assert!((iou(&a, &a) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn iou_is_translation_invariant(a in bbox(), b in bbox(), dx in -20.0f64..20.0, dy in -20.0f64..20.0) {
        let shift = |x: &BBox| BBox::from([x.x1 + dx, x.y1 + dy, x.x2 + dx, x.y2 + dy]);
        prop_assert!((iou(&a, &b) - iou(&shift(&a), &shift(&b))).abs() < 1e-9);
    }

    #[test]
    fn ap_is_monotone_in_appended_results(f in flags(), extra_gt in 0usize..4) {
        let n_tp = f.iter().filter(|&&x| x).count();
        // room for one more true positive
        let n_gt = n_tp + 1 + extra_gt;
        for interp in [Interpolation::Point101, Interpolation::AllPoints] {
            let base = average_precision(&ranked(&f), n_gt, interp).unwrap();
            let mut with_tp = f.clone();
            with_tp.push(true);
            let mut with_fp = f.clone();
            with_fp.push(false);
            prop_assert!(average_precision(&ranked(&with_tp), n_gt, interp).unwrap() >= base);
            prop_assert!(average_precision(&ranked(&with_fp), n_gt, interp).unwrap() <= base);
            prop_assert!((0.0..=1.0).contains(&base));
        }
    }

    #[test]
    fn evaluate_ignores_detection_order(
        gts in proptest::collection::vec((bbox(), 1u32..4, 0usize..2), 1..8),
        dets in proptest::collection::vec((bbox(), 1u32..4, 0usize..2), 0..10),
        seed in any::<u64>(),
    ) {
        let vocab = Vocabulary::new(
            "v",
            (1..4).map(|i| ClassEntry::new(i, &format!("c{i}"), &[])).collect(),
        )
        .unwrap();
        let gts: Vec<GroundTruthBox> = gts
            .into_iter()
            .map(|(b, c, im)| GroundTruthBox { image_id: format!("i{im}"), bbox: b, class_id: ClassId(c) })
            .collect();
        // near-ground-truth copies so matches actually happen, distinct scores
        let dets: Vec<Detection> = dets
            .into_iter()
            .enumerate()
            .map(|(i, (b, c, im))| {
                let src = &gts[i % gts.len()];
                let bbox = if i % 2 == 0 { BBox::from([src.bbox.x1 + 0.5, src.bbox.y1, src.bbox.x2, src.bbox.y2 + 0.5]) } else { b };
                let (image_id, class_id) = if i % 2 == 0 { (src.image_id.clone(), src.class_id) } else { (format!("i{im}"), ClassId(c)) };
                Detection { image_id, bbox, class_id, score: 0.99 - i as f64 * 0.013 }
            })
            .collect();
        let mut shuffled = dets.clone();
        let mut s = seed;
        for i in (1..shuffled.len()).rev() {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            shuffled.swap(i, (s >> 33) as usize % (i + 1));
        }
        let t = coco_thresholds();
        let a = evaluate(&dets, &gts, &vocab, None, &t, Interpolation::Point101).unwrap();
        let b = evaluate(&shuffled, &gts, &vocab, None, &t, Interpolation::Point101).unwrap();
        prop_assert_eq!(&a.ap_per_class, &b.ap_per_class);
        prop_assert_eq!(a.ap50_all, b.ap50_all);
        prop_assert_eq!(a.map_all, b.map_all);
        let per_class: BTreeMap<ClassId, usize> = gts.iter().fold(BTreeMap::new(), |mut m, g| {
            *m.entry(g.class_id).or_default() += 1;
            m
        });
        prop_assert_eq!(a.ap_per_class.keys().collect::<Vec<_>>(), per_class.keys().collect::<Vec<_>>());
    }
}
