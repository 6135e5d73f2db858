//! metrics.json and report.md.

use std::collections::BTreeMap;
use std::fmt::Write;

use serde::Serialize;
use vocada_core::metrics::{coco_thresholds, dataset_vocab_quality, evaluate, Counts, EvalReport, Interpolation, Split};
use vocada_core::{AdaptedVocabulary, ClassId, Detection, GroundTruthBox, SelectorKind, Vocabulary};

use crate::error::CliResult;

/// Detection metrics, plus vocabulary quality when `adapted` is given.
pub fn evaluate_all(
    dets: &[Detection],
    gts: &[GroundTruthBox],
    vocab: &Vocabulary,
    groups: Option<&BTreeMap<ClassId, Split>>,
    adapted: Option<&[AdaptedVocabulary]>,
    interpolation: Interpolation,
) -> CliResult<EvalReport> {
    let mut report = evaluate(dets, gts, vocab, groups, &coco_thresholds(), interpolation)?;
    if let Some(adapted) = adapted {
        report.counts.fallbacks = adapted.iter().filter(|a| a.fallback_used).count();
        if let Some((p, r, flagged)) = dataset_vocab_quality(adapted, gts) {
            report.vocab_precision = Some(p);
            report.vocab_recall = Some(r);
            report.counts.empty_precision_images = flagged;
        }
    }
    Ok(report)
}

#[derive(Serialize)]
struct ClassMetrics<'a> {
    name: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    split: Option<Split>,
    ap50: f64,
    map: f64,
    /// One value per IoU threshold.
    ap: &'a [f64],
}

#[derive(Serialize)]
struct MetricsFile<'a> {
    ap50_all: Option<f64>,
    ap50_base: Option<f64>,
    ap50_novel: Option<f64>,
    map_all: Option<f64>,
    map_base: Option<f64>,
    map_novel: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    vocab_precision: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    vocab_recall: Option<f64>,
    counts: &'a Counts,
    iou_thresholds: &'a [f64],
    per_class: BTreeMap<u32, ClassMetrics<'a>>,
}

pub fn metrics_json(report: &EvalReport, vocab: &Vocabulary, groups: Option<&BTreeMap<ClassId, Split>>) -> String {
    let t50 = report.thresholds.iter().position(|&t| (t - 0.5).abs() < 1e-9);
    let per_class = report
        .ap_per_class
        .iter()
        .map(|(id, aps)| {
            let name = vocab.get(*id).map(|c| c.name.as_str()).unwrap_or("");
            let m = ClassMetrics {
                name,
                split: groups.and_then(|g| g.get(id).copied()),
                ap50: t50.map(|t| aps[t]).unwrap_or(f64::NAN),
                map: aps.iter().sum::<f64>() / aps.len() as f64,
                ap: aps,
            };
            (id.0, m)
        })
        .collect();
    let file = MetricsFile {
        ap50_all: report.ap50_all,
        ap50_base: report.ap50_base,
        ap50_novel: report.ap50_novel,
        map_all: report.map_all,
        map_base: report.map_base,
        map_novel: report.map_novel,
        vocab_precision: report.vocab_precision,
        vocab_recall: report.vocab_recall,
        counts: &report.counts,
        iou_thresholds: &report.thresholds,
        per_class,
    };
    let mut s = serde_json::to_string_pretty(&file).expect("metrics serialize");
    s.push('\n');
    s
}

fn pct(v: Option<f64>) -> String {
    v.map(|x| format!("{:.2}", x * 100.0)).unwrap_or_else(|| "-".into())
}

pub fn report_markdown(
    report: &EvalReport,
    vocab: &Vocabulary,
    groups: Option<&BTreeMap<ClassId, Split>>,
    selector: Option<SelectorKind>,
) -> String {
    let mut s = String::new();
    let label = selector.map(|k| k.as_str()).unwrap_or("-");
    s.push_str("# Evaluation report\n\n");
    s.push_str("| Selector | AP50 novel | AP50 base | AP50 all | mAP novel | mAP base | mAP all | Vocab precision | Vocab recall |\n");
    s.push_str("|---|---:|---:|---:|---:|---:|---:|---:|---:|\n");
    let _ = writeln!(
        s,
        "| {label} | {} | {} | {} | {} | {} | {} | {} | {} |",
        pct(report.ap50_novel),
        pct(report.ap50_base),
        pct(report.ap50_all),
        pct(report.map_novel),
        pct(report.map_base),
        pct(report.map_all),
        pct(report.vocab_precision),
        pct(report.vocab_recall),
    );
    let c = &report.counts;
    let _ = writeln!(
        s,
        "\n{} images, {} detections, {} ground-truth boxes, {} selector fallbacks.",
        c.images, c.detections, c.gts, c.fallbacks
    );
    if c.empty_precision_images > 0 {
        let _ = writeln!(
            s,
            "{} images selected no classes; their vocabulary precision counts as 100.",
            c.empty_precision_images
        );
    }
    s.push_str("\n## Per class\n\n| Id | Class | Split | AP50 | mAP |\n|---:|---|---|---:|---:|\n");
    let t50 = report.thresholds.iter().position(|&t| (t - 0.5).abs() < 1e-9);
    for (id, aps) in &report.ap_per_class {
        let name = vocab.get(*id).map(|c| c.name.as_str()).unwrap_or("");
        let split = match groups.and_then(|g| g.get(id)) {
            Some(Split::Base) => "base",
            Some(Split::Novel) => "novel",
            None => "-",
        };
        let map = aps.iter().sum::<f64>() / aps.len() as f64;
        let _ = writeln!(
            s,
            "| {} | {} | {} | {} | {} |",
            id.0,
            name,
            split,
            pct(t50.map(|t| aps[t])),
            pct(Some(map))
        );
    }
    s
}
