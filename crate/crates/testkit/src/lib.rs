//! Slow, obviously-correct reference implementations for cross-checking the
//! production code, plus random scene generators.
//!
//! Nothing here calls into `vocada_core` logic; only its plain data types
//! are shared.

use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;

use rand::Rng;
use vocada_core::{BBox, ClassId, Detection, GroundTruthBox};

pub fn fixtures_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../cli/tests/fixtures")
}

/// Overlap of two intervals, 0 when they do not meet.
fn overlap(a0: f64, a1: f64, b0: f64, b1: f64) -> f64 {
    let lo = if a0 > b0 { a0 } else { b0 };
    let hi = if a1 < b1 { a1 } else { b1 };
    if hi > lo {
        hi - lo
    } else {
        0.0
    }
}

pub fn naive_iou(a: &BBox, b: &BBox) -> f64 {
    let area = |x: &BBox| {
        let w = x.x2 - x.x1;
        let h = x.y2 - x.y1;
        if w > 0.0 && h > 0.0 {
            w * h
        } else {
            0.0
        }
    };
    let inter = overlap(a.x1, a.x2, b.x1, b.x2) * overlap(a.y1, a.y2, b.y1, b.y2);
    let union = area(a) + area(b) - inter;
    if inter <= 0.0 || union <= 0.0 {
        return 0.0;
    }
    inter / union
}

/// TP flag per detection for one class, brute force.
///
/// Repeatedly takes the most confident unvisited detection (earliest index on
/// ties), scans every ground-truth box of its image, and claims the free one
/// with the greatest IoU (earliest index on ties) if it reaches `thr`.
pub fn naive_match(dets: &[&Detection], gts: &[&GroundTruthBox], thr: f64) -> Vec<bool> {
    let mut visited = vec![false; dets.len()];
    let mut taken = vec![false; gts.len()];
    let mut tp = vec![false; dets.len()];
    for _ in 0..dets.len() {
        let mut pick: Option<usize> = None;
        for i in 0..dets.len() {
            if visited[i] {
                continue;
            }
            match pick {
                None => pick = Some(i),
                Some(p) if dets[i].score > dets[p].score => pick = Some(i),
                _ => {}
            }
        }
        let i = pick.unwrap();
        visited[i] = true;
        let mut best: Option<(usize, f64)> = None;
        for j in 0..gts.len() {
            if taken[j] || gts[j].image_id != dets[i].image_id || gts[j].class_id != dets[i].class_id {
                continue;
            }
            let o = naive_iou(&dets[i].bbox, &gts[j].bbox);
            if o < thr {
                continue;
            }
            if best.is_none_or(|(_, bo)| o > bo) {
                best = Some((j, o));
            }
        }
        if let Some((j, _)) = best {
            taken[j] = true;
            tp[i] = true;
        }
    }
    tp
}

/// 101-point AP: for each recall level, the best precision among all
/// prefixes reaching it. Precision and recall of each prefix are recounted
/// from scratch.
pub fn naive_ap101(flags_in_rank_order: &[bool], n_gt: usize) -> f64 {
    assert!(n_gt > 0);
    let n = flags_in_rank_order.len();
    let mut total = 0.0;
    for r in 0..=100 {
        let level = r as f64 / 100.0;
        let mut best = 0.0f64;
        for k in 1..=n {
            let tp = flags_in_rank_order[..k].iter().filter(|&&f| f).count();
            let recall = tp as f64 / n_gt as f64;
            let precision = tp as f64 / k as f64;
            if recall >= level && precision > best {
                best = precision;
            }
        }
        total += best;
    }
    total / 101.0
}

/// Area under the upper envelope of the PR curve, by summing each recall step.
pub fn naive_ap_all_points(flags_in_rank_order: &[bool], n_gt: usize) -> f64 {
    assert!(n_gt > 0);
    let n = flags_in_rank_order.len();
    let mut area = 0.0;
    for k in 1..=n {
        if !flags_in_rank_order[k - 1] {
            continue;
        }
        // the recall step from (tp-1)/n_gt to tp/n_gt, weighted by the best
        // precision at any later prefix
        let mut best = 0.0f64;
        for m in k..=n {
            let tp = flags_in_rank_order[..m].iter().filter(|&&f| f).count();
            best = best.max(tp as f64 / m as f64);
        }
        area += best / n_gt as f64;
    }
    area
}

#[derive(Debug, Clone, PartialEq)]
pub struct NaiveReport {
    /// (class, threshold index) → AP, only classes with ground truth.
    pub ap: BTreeMap<(ClassId, usize), f64>,
    pub ap50_all: Option<f64>,
    pub map_all: Option<f64>,
}

/// Reference evaluator. Detections of a class are ranked by descending
/// score, then image id, then input position.
pub fn naive_evaluate(
    dets: &[Detection],
    gts: &[GroundTruthBox],
    thresholds: &[f64],
    all_points: bool,
) -> NaiveReport {
    let classes: BTreeSet<ClassId> = gts.iter().map(|g| g.class_id).collect();
    let mut ap = BTreeMap::new();
    for &c in &classes {
        let mut cd: Vec<(usize, &Detection)> = dets.iter().enumerate().filter(|(_, d)| d.class_id == c).collect();
        cd.sort_by(|(ia, a), (ib, b)| {
            b.score
                .partial_cmp(&a.score)
                .unwrap()
                .then_with(|| a.image_id.cmp(&b.image_id))
                .then_with(|| ia.cmp(ib))
        });
        let ranked: Vec<&Detection> = cd.iter().map(|(_, d)| *d).collect();
        let cg: Vec<&GroundTruthBox> = gts.iter().filter(|g| g.class_id == c).collect();
        for (ti, &t) in thresholds.iter().enumerate() {
            let flags = naive_match(&ranked, &cg, t);
            let v = if all_points {
                naive_ap_all_points(&flags, cg.len())
            } else {
                naive_ap101(&flags, cg.len())
            };
            ap.insert((c, ti), v);
        }
    }
    let t50 = thresholds.iter().position(|&t| (t - 0.5).abs() < 1e-12);
    let ap50_all = if classes.is_empty() {
        None
    } else {
        t50.map(|ti| classes.iter().map(|c| ap[&(*c, ti)]).sum::<f64>() / classes.len() as f64)
    };
    let map_all = if classes.is_empty() || thresholds.is_empty() {
        None
    } else {
        let per_class: Vec<f64> = classes
            .iter()
            .map(|c| (0..thresholds.len()).map(|ti| ap[&(*c, ti)]).sum::<f64>() / thresholds.len() as f64)
            .collect();
        Some(per_class.iter().sum::<f64>() / per_class.len() as f64)
    };
    NaiveReport { ap, ap50_all, map_all }
}

/// Argmax of cosine similarity between `z` and each candidate, computed
/// with explicit normalization. Lowest id wins ties.
pub fn naive_argmax(z: &[f32], candidates: &[(ClassId, Vec<f32>)]) -> (ClassId, f64) {
    let norm = |v: &[f32]| v.iter().map(|&x| (x as f64) * (x as f64)).sum::<f64>().sqrt();
    let nz = norm(z);
    let mut sorted: Vec<&(ClassId, Vec<f32>)> = candidates.iter().collect();
    sorted.sort_by_key(|(id, _)| *id);
    let mut best: Option<(ClassId, f64)> = None;
    for (id, v) in sorted {
        let nv = norm(v);
        let mut d = 0.0;
        for i in 0..z.len() {
            d += (z[i] as f64 / nz) * (v[i] as f64 / nv);
        }
        if best.is_none_or(|(_, b)| d > b) {
            best = Some((*id, d));
        }
    }
    best.expect("no candidates")
}

/// A random evaluation scene.
#[derive(Debug, Clone)]
pub struct Scene {
    pub classes: Vec<ClassId>,
    pub dets: Vec<Detection>,
    pub gts: Vec<GroundTruthBox>,
}

fn random_box(rng: &mut impl Rng) -> BBox {
    let x1 = rng.gen_range(0.0..80.0f64);
    let y1 = rng.gen_range(0.0..80.0f64);
    let w = rng.gen_range(2.0..30.0f64);
    let h = rng.gen_range(2.0..30.0f64);
    BBox {
        x1,
        y1,
        x2: x1 + w,
        y2: y1 + h,
    }
}

fn jitter(rng: &mut impl Rng, b: &BBox) -> BBox {
    let mut d = || rng.gen_range(-4.0..4.0f64);
    let x1 = b.x1 + d();
    let y1 = b.y1 + d();
    let x2 = (b.x2 + d()).max(x1 + 1.0);
    let y2 = (b.y2 + d()).max(y1 + 1.0);
    BBox { x1, y1, x2, y2 }
}

/// Up to `max_boxes` ground-truth and detection boxes each, over at most
/// `max_classes` classes and a handful of images. Detections are mostly
/// perturbed copies of ground truth, so every IoU threshold sees both hits
/// and misses. Scores are continuous, so ties have probability zero.
pub fn random_scene(rng: &mut impl Rng, max_boxes: usize, max_classes: u32) -> Scene {
    let n_classes = rng.gen_range(1..=max_classes);
    let classes: Vec<ClassId> = (1..=n_classes).map(ClassId).collect();
    let n_images = rng.gen_range(1..=3);
    let image = |i: usize| format!("img{i}");
    let n_gt = rng.gen_range(0..=max_boxes);
    let gts: Vec<GroundTruthBox> = (0..n_gt)
        .map(|_| GroundTruthBox {
            image_id: image(rng.gen_range(0..n_images)),
            bbox: random_box(rng),
            class_id: classes[rng.gen_range(0..classes.len())],
        })
        .collect();
    let n_det = rng.gen_range(0..=max_boxes);
    let dets: Vec<Detection> = (0..n_det)
        .map(|_| {
            let (image_id, bbox, class_id) = if !gts.is_empty() && rng.gen_bool(0.7) {
                let g = &gts[rng.gen_range(0..gts.len())];
                let class = if rng.gen_bool(0.85) {
                    g.class_id
                } else {
                    classes[rng.gen_range(0..classes.len())]
                };
                (g.image_id.clone(), jitter(rng, &g.bbox), class)
            } else {
                (
                    image(rng.gen_range(0..n_images)),
                    random_box(rng),
                    classes[rng.gen_range(0..classes.len())],
                )
            };
            Detection {
                image_id,
                bbox,
                class_id,
                score: rng.gen_range(0.0..1.0),
            }
        })
        .collect();
    Scene { classes, dets, gts }
}

/// Random vector with entries in [-1, 1), never all zero.
pub fn random_vector(rng: &mut impl Rng, dim: usize) -> Vec<f32> {
    loop {
        let v: Vec<f32> = (0..dim).map(|_| rng.gen_range(-1.0..1.0f32)).collect();
        if v.iter().any(|x| x.abs() > 1e-3) {
            return v;
        }
    }
}
