//! Detection and vocabulary-adaptation metrics.
//!
//! Detection AP follows the COCO conventions: greedy highest-IoU matching
//! with ground-truth consumption, 101-point interpolated precision, and
//! classes without ground truth left out of every mean.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::domain::{AdaptedVocabulary, BBox, ClassId, Detection, GroundTruthBox, Vocabulary};
use crate::error::{Error, Result};

/// IoU thresholds 0.50, 0.55, ..., 0.95.
pub fn coco_thresholds() -> Vec<f64> {
    (0..10).map(|i| (50 + 5 * i) as f64 / 100.0).collect()
}

/// Intersection over union; 0 for disjoint or degenerate boxes.
pub fn iou(a: &BBox, b: &BBox) -> f64 {
    let iw = (a.x2.min(b.x2) - a.x1.max(b.x1)).max(0.0);
    let ih = (a.y2.min(b.y2) - a.y1.max(b.y1)).max(0.0);
    let inter = iw * ih;
    let union = a.area() + b.area() - inter;
    if union <= 0.0 || inter <= 0.0 {
        0.0
    } else {
        (inter / union).min(1.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MatchResult {
    /// Per detection, in input order: true positive?
    pub det_tp: Vec<bool>,
    /// Per ground-truth box, in input order: consumed by a detection?
    pub gt_matched: Vec<bool>,
}

/// Stable descending-confidence order of `scores`.
fn confidence_order(scores: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap_or(Ordering::Equal));
    order
}

/// Greedy matching of detections to ground truth.
///
/// Detections are visited by decreasing confidence (input order on ties).
/// Each takes the unmatched ground-truth box of the same image and class
/// with the highest IoU, provided that IoU reaches `iou_threshold`.
pub fn match_detections(dets: &[Detection], gts: &[GroundTruthBox], iou_threshold: f64) -> MatchResult {
    let mut det_tp = vec![false; dets.len()];
    let mut gt_matched = vec![false; gts.len()];
    let scores: Vec<f64> = dets.iter().map(|d| d.score).collect();
    for di in confidence_order(&scores) {
        let d = &dets[di];
        let mut best: Option<(usize, f64)> = None;
        for (gi, g) in gts.iter().enumerate() {
            if gt_matched[gi] || g.class_id != d.class_id || g.image_id != d.image_id {
                continue;
            }
            let o = iou(&d.bbox, &g.bbox);
            if o >= iou_threshold && best.is_none_or(|(_, b)| o > b) {
                best = Some((gi, o));
            }
        }
        if let Some((gi, _)) = best {
            gt_matched[gi] = true;
            det_tp[di] = true;
        }
    }
    MatchResult { det_tp, gt_matched }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PRPoint {
    pub precision: f64,
    pub recall: f64,
    pub confidence: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Interpolation {
    /// Mean interpolated precision at recall 0, 0.01, ..., 1.
    #[default]
    Point101,
    /// Exact area under the interpolated curve.
    AllPoints,
}

/// Cumulative precision/recall after each detection, most confident first.
pub fn pr_curve(scored: &[(f64, bool)], n_gt: usize) -> Vec<PRPoint> {
    let scores: Vec<f64> = scored.iter().map(|s| s.0).collect();
    let mut tp = 0usize;
    let mut seen = 0usize;
    confidence_order(&scores)
        .into_iter()
        .map(|i| {
            seen += 1;
            if scored[i].1 {
                tp += 1;
            }
            PRPoint {
                precision: tp as f64 / seen as f64,
                recall: if n_gt == 0 { 0.0 } else { tp as f64 / n_gt as f64 },
                confidence: scored[i].0,
            }
        })
        .collect()
}

/// Average precision of `(confidence, is_tp)` pairs against `n_gt` objects.
/// `None` when there is no ground truth to recall.
pub fn average_precision(scored: &[(f64, bool)], n_gt: usize, interpolation: Interpolation) -> Option<f64> {
    if n_gt == 0 {
        return None;
    }
    let curve = pr_curve(scored, n_gt);
    // precision envelope: best precision at this recall or beyond
    let mut envelope: Vec<f64> = curve.iter().map(|p| p.precision).collect();
    for i in (0..envelope.len().saturating_sub(1)).rev() {
        envelope[i] = envelope[i].max(envelope[i + 1]);
    }
    let ap = match interpolation {
        Interpolation::Point101 => {
            let mut sum = 0.0;
            for r in 0..=100 {
                let level = r as f64 / 100.0;
                let idx = curve.partition_point(|p| p.recall < level);
                if idx < curve.len() {
                    sum += envelope[idx];
                }
            }
            sum / 101.0
        }
        Interpolation::AllPoints => {
            let mut area = 0.0;
            let mut prev_recall = 0.0;
            for (p, &env) in curve.iter().zip(&envelope) {
                if p.recall > prev_recall {
                    area += (p.recall - prev_recall) * env;
                    prev_recall = p.recall;
                }
            }
            area
        }
    };
    Some(ap)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Base,
    Novel,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Counts {
    pub images: usize,
    pub detections: usize,
    pub gts: usize,
    pub fallbacks: usize,
    /// Images whose vocabulary precision used the empty-selection convention.
    pub empty_precision_images: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub thresholds: Vec<f64>,
    /// AP per class (with ground truth) per threshold, aligned with `thresholds`.
    pub ap_per_class: BTreeMap<ClassId, Vec<f64>>,
    pub ap50_all: Option<f64>,
    pub ap50_base: Option<f64>,
    pub ap50_novel: Option<f64>,
    pub map_all: Option<f64>,
    pub map_base: Option<f64>,
    pub map_novel: Option<f64>,
    pub vocab_precision: Option<f64>,
    pub vocab_recall: Option<f64>,
    pub counts: Counts,
}

impl EvalReport {
    pub fn ap(&self, class: ClassId, threshold: f64) -> Option<f64> {
        let t = self.thresholds.iter().position(|&t| (t - threshold).abs() < 1e-9)?;
        self.ap_per_class.get(&class).map(|v| v[t])
    }
}

fn mean(values: impl IntoIterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.into_iter().fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

/// Full detection evaluation over a dataset.
///
/// When `groups` is given it must assign every vocabulary class to a split.
pub fn evaluate(
    dets: &[Detection],
    gts: &[GroundTruthBox],
    vocab: &Vocabulary,
    groups: Option<&BTreeMap<ClassId, Split>>,
    thresholds: &[f64],
    interpolation: Interpolation,
) -> Result<EvalReport> {
    for d in dets {
        if !vocab.contains(d.class_id) {
            return Err(Error::UnknownClass(d.class_id));
        }
        if !d.score.is_finite() {
            return Err(Error::Data(format!("non-finite score on image {}", d.image_id)));
        }
    }
    for g in gts {
        if !vocab.contains(g.class_id) {
            return Err(Error::UnknownClass(g.class_id));
        }
    }
    if let Some(groups) = groups {
        if let Some(c) = vocab.classes().iter().find(|c| !groups.contains_key(&c.id)) {
            return Err(Error::Data(format!("class {} has no base/novel group", c.id)));
        }
    }

    // (image, class) buckets keep matching local and the visiting order fixed.
    let mut det_buckets: BTreeMap<(ClassId, &str), Vec<Detection>> = BTreeMap::new();
    let mut gt_buckets: BTreeMap<(ClassId, &str), Vec<GroundTruthBox>> = BTreeMap::new();
    let mut n_gt: BTreeMap<ClassId, usize> = BTreeMap::new();
    for d in dets {
        det_buckets.entry((d.class_id, &d.image_id)).or_default().push(d.clone());
    }
    for g in gts {
        gt_buckets.entry((g.class_id, &g.image_id)).or_default().push(g.clone());
        *n_gt.entry(g.class_id).or_default() += 1;
    }

    let mut ap_per_class = BTreeMap::new();
    for (&class, &count) in &n_gt {
        let buckets: Vec<_> = det_buckets.range((class, "")..).take_while(|((c, _), _)| *c == class).collect();
        let aps = thresholds
            .iter()
            .map(|&t| {
                let mut scored = Vec::new();
                for ((_, image), image_dets) in &buckets {
                    let image_gts = gt_buckets.get(&(class, *image)).map(Vec::as_slice).unwrap_or(&[]);
                    let m = match_detections(image_dets, image_gts, t);
                    let scores: Vec<f64> = image_dets.iter().map(|d| d.score).collect();
                    for i in confidence_order(&scores) {
                        scored.push((image_dets[i].score, m.det_tp[i]));
                    }
                }
                average_precision(&scored, count, interpolation).expect("class has ground truth")
            })
            .collect::<Vec<f64>>();
        ap_per_class.insert(class, aps);
    }

    let t50 = thresholds.iter().position(|&t| (t - 0.5).abs() < 1e-9);
    let in_split = |c: &ClassId, split: Option<Split>| match (split, groups) {
        (None, _) => true,
        (Some(s), Some(g)) => g.get(c) == Some(&s),
        (Some(_), None) => false,
    };
    let summarize = |split: Option<Split>| -> (Option<f64>, Option<f64>) {
        if split.is_some() && groups.is_none() {
            return (None, None);
        }
        let chosen: Vec<&Vec<f64>> = ap_per_class
            .iter()
            .filter(|(c, _)| in_split(c, split))
            .map(|(_, v)| v)
            .collect();
        let ap50 = t50.and_then(|t| mean(chosen.iter().map(|v| v[t])));
        let map = mean(chosen.iter().filter_map(|v| mean(v.iter().copied())));
        (ap50, map)
    };
    let (ap50_all, map_all) = summarize(None);
    let (ap50_base, map_base) = summarize(Some(Split::Base));
    let (ap50_novel, map_novel) = summarize(Some(Split::Novel));

    let images: BTreeSet<&str> = dets
        .iter()
        .map(|d| d.image_id.as_str())
        .chain(gts.iter().map(|g| g.image_id.as_str()))
        .collect();
    Ok(EvalReport {
        thresholds: thresholds.to_vec(),
        ap_per_class,
        ap50_all,
        ap50_base,
        ap50_novel,
        map_all,
        map_base,
        map_novel,
        vocab_precision: None,
        vocab_recall: None,
        counts: Counts {
            images: images.len(),
            detections: dets.len(),
            gts: gts.len(),
            ..Default::default()
        },
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VocabQuality {
    pub precision: f64,
    pub recall: f64,
    /// Nothing was selected, so precision took the 1.0 convention.
    pub empty_selection: bool,
}

/// Set precision/recall of an adapted vocabulary against ground-truth classes.
pub fn vocab_quality(adapted: &BTreeSet<ClassId>, gt_classes: &BTreeSet<ClassId>) -> VocabQuality {
    let tp = adapted.intersection(gt_classes).count();
    let fp = adapted.len() - tp;
    let fn_ = gt_classes.len() - tp;
    let empty_selection = tp + fp == 0;
    VocabQuality {
        precision: if empty_selection { 1.0 } else { tp as f64 / (tp + fp) as f64 },
        recall: if tp + fn_ == 0 { 1.0 } else { tp as f64 / (tp + fn_) as f64 },
        empty_selection,
    }
}

/// Per-image mean vocabulary precision and recall over `adapted`.
///
/// Images absent from `gts` count as having no ground-truth classes.
pub fn dataset_vocab_quality(adapted: &[AdaptedVocabulary], gts: &[GroundTruthBox]) -> Option<(f64, f64, usize)> {
    let mut gt_classes: BTreeMap<&str, BTreeSet<ClassId>> = BTreeMap::new();
    for g in gts {
        gt_classes.entry(&g.image_id).or_default().insert(g.class_id);
    }
    let empty = BTreeSet::new();
    let per_image: Vec<VocabQuality> = adapted
        .iter()
        .map(|a| vocab_quality(&a.class_ids, gt_classes.get(a.image_id.as_str()).unwrap_or(&empty)))
        .collect();
    let precision = mean(per_image.iter().map(|q| q.precision))?;
    let recall = mean(per_image.iter().map(|q| q.recall))?;
    let flagged = per_image.iter().filter(|q| q.empty_selection).count();
    Some((precision, recall, flagged))
}
