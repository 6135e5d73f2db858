//! File-level stage commands and the end-to-end run.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};
use vocada_core::embedding::keys_sidecar;
use vocada_core::io::{self, GroundTruth};
use vocada_core::metrics::Interpolation;
use vocada_core::{
    AdaptedVocabulary, CaptionRecord, Detection, EmbeddingMatrix, NounPhraseSet, SelectorKind, TagLexicon, Vocabulary,
};
use vocada_gateway::{CaptionerPrompt, Gateway};

use crate::config::RunConfig;
use crate::error::{CliError, CliResult};
use crate::report::{evaluate_all, metrics_json, report_markdown};
use crate::stages::{self, AdaptSummary, SelectorDeps, Workers};

pub const CAPTIONS_FILE: &str = "captions.jsonl";
pub const NOUNS_FILE: &str = "nouns.jsonl";
pub const ADAPTED_FILE: &str = "adapted.jsonl";
pub const DETECTIONS_FILE: &str = "detections.jsonl";
pub const METRICS_FILE: &str = "metrics.json";
pub const REPORT_FILE: &str = "report.md";
pub const MANIFEST_FILE: &str = "MANIFEST.json";

fn require<'a>(path: &'a Option<PathBuf>, what: &str) -> CliResult<&'a Path> {
    path.as_deref().ok_or_else(|| CliError::usage(format!("no {what} given")))
}

fn load_lexicon(path: Option<&Path>) -> CliResult<TagLexicon> {
    Ok(match path {
        Some(p) => TagLexicon::load(p)?,
        None => TagLexicon::default_english(),
    })
}

fn load_embeddings(path: &Path) -> CliResult<EmbeddingMatrix> {
    Ok(EmbeddingMatrix::load(path)?)
}

fn write_text(path: &Path, text: &str) -> CliResult<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| vocada_core::Error::Io {
            path: dir.to_path_buf(),
            source: e,
        })?;
    }
    fs::write(path, text).map_err(|e| {
        vocada_core::Error::Io {
            path: path.to_path_buf(),
            source: e,
        }
        .into()
    })
}

fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> CliResult<()> {
    write_text(path, &io::to_jsonl(items))
}

fn gateway(cfg: &RunConfig) -> CliResult<Gateway> {
    let g = cfg
        .gateway
        .clone()
        .ok_or_else(|| CliError::usage("no gateway configured"))?;
    Ok(Gateway::new(g)?)
}

fn captioner_prompt(cfg: &RunConfig) -> CliResult<CaptionerPrompt> {
    Ok(match &cfg.paths.captioner_prompt {
        Some(p) => CaptionerPrompt::load(p)?,
        None => CaptionerPrompt::default(),
    })
}

pub fn cmd_extract_nouns(cfg: &RunConfig, out: &Path) -> CliResult<Vec<NounPhraseSet>> {
    let captions: Vec<CaptionRecord> = io::read_jsonl(require(&cfg.paths.captions, "captions file")?)?;
    let lexicon = load_lexicon(cfg.paths.lexicon.as_deref())?;
    let nouns = stages::extract_nouns(&captions, &lexicon, &Workers::new(cfg.concurrency)?)?;
    write_jsonl(out, &nouns)?;
    Ok(nouns)
}

/// Checks that the configured selector has its inputs before anything is read.
pub fn check_adapt_inputs(cfg: &RunConfig, have_nouns: bool, have_captions: bool) -> CliResult<()> {
    let p = &cfg.paths;
    require(&p.vocabulary, "vocabulary")?;
    if !have_nouns && !have_captions {
        return Err(CliError::usage("adapt needs noun phrases or captions"));
    }
    let missing = |what: &str| Err(CliError::usage(format!("selector {} needs {what}", cfg.selector.kind)));
    match cfg.selector.kind {
        SelectorKind::Baseline => Ok(()),
        SelectorKind::Oracle if p.groundtruth.is_none() => missing("ground truth"),
        SelectorKind::EmbedTopk if p.class_embeddings.is_none() => missing("class embeddings"),
        SelectorKind::EmbedTopk if p.phrase_embeddings.is_none() => missing("phrase embeddings"),
        SelectorKind::Llm if cfg.gateway.is_none() => missing("a gateway configuration"),
        SelectorKind::Llm if !have_captions => missing("captions"),
        _ => Ok(()),
    }
}

struct AdaptContext {
    vocab: Vocabulary,
    class_emb: Option<EmbeddingMatrix>,
    phrase_emb: Option<EmbeddingMatrix>,
    groundtruth: Option<GroundTruth>,
}

impl AdaptContext {
    fn load(cfg: &RunConfig) -> CliResult<Self> {
        let p = &cfg.paths;
        let kind = cfg.selector.kind;
        let topk = kind == SelectorKind::EmbedTopk;
        Ok(Self {
            vocab: io::read_vocabulary(require(&p.vocabulary, "vocabulary")?)?,
            class_emb: if topk { Some(load_embeddings(require(&p.class_embeddings, "class embeddings")?)?) } else { None },
            phrase_emb: if topk { Some(load_embeddings(require(&p.phrase_embeddings, "phrase embeddings")?)?) } else { None },
            groundtruth: match (&p.groundtruth, kind) {
                (Some(g), SelectorKind::Oracle) => Some(io::read_groundtruth(g)?),
                _ => None,
            },
        })
    }
}

fn run_adapt(
    cfg: &RunConfig,
    ctx: &AdaptContext,
    nouns: &[NounPhraseSet],
    captions: Option<&[CaptionRecord]>,
    gateway: Option<&Gateway>,
    workers: &Workers,
) -> CliResult<Vec<AdaptedVocabulary>> {
    let deps = SelectorDeps {
        class_emb: ctx.class_emb.as_ref(),
        phrase_emb: ctx.phrase_emb.as_ref(),
        groundtruth: ctx.groundtruth.as_ref(),
        gateway,
        captions,
    };
    stages::adapt(nouns, &ctx.vocab, &cfg.selector, &deps, workers)
}

/// `nouns` is a nouns.jsonl path; without it phrases are extracted from the
/// configured captions.
pub fn cmd_adapt(cfg: &RunConfig, nouns: Option<&Path>, out: &Path) -> CliResult<(Vec<AdaptedVocabulary>, AdaptSummary)> {
    check_adapt_inputs(cfg, nouns.is_some(), cfg.paths.captions.is_some())?;
    let workers = Workers::new(cfg.concurrency)?;
    let captions: Option<Vec<CaptionRecord>> = cfg.paths.captions.as_deref().map(io::read_jsonl).transpose()?;
    let nouns: Vec<NounPhraseSet> = match nouns {
        Some(p) => io::read_jsonl(p)?,
        None => {
            let lexicon = load_lexicon(cfg.paths.lexicon.as_deref())?;
            stages::extract_nouns(captions.as_deref().expect("checked"), &lexicon, &workers)?
        }
    };
    let ctx = AdaptContext::load(cfg)?;
    let gw = if cfg.selector.kind == SelectorKind::Llm { Some(gateway(cfg)?) } else { None };
    let adapted = run_adapt(cfg, &ctx, &nouns, captions.as_deref(), gw.as_ref(), &workers)?;
    write_jsonl(out, &adapted)?;
    let summary = AdaptSummary::of(&adapted);
    Ok((adapted, summary))
}

pub fn cmd_rescore(cfg: &RunConfig, adapted: &Path, out: &Path) -> CliResult<Vec<Detection>> {
    let p = &cfg.paths;
    let vocab = io::read_vocabulary(require(&p.vocabulary, "vocabulary")?)?;
    let adapted: Vec<AdaptedVocabulary> = io::read_jsonl(adapted)?;
    let dets = rescore_loaded(cfg, &vocab, &adapted, &Workers::new(cfg.concurrency)?)?;
    write_jsonl(out, &dets)?;
    Ok(dets)
}

fn rescore_loaded(
    cfg: &RunConfig,
    vocab: &Vocabulary,
    adapted: &[AdaptedVocabulary],
    workers: &Workers,
) -> CliResult<Vec<Detection>> {
    let p = &cfg.paths;
    let class_emb = load_embeddings(require(&p.class_embeddings, "class embeddings")?)?;
    let proposal_emb = load_embeddings(require(&p.proposal_embeddings, "proposal embeddings")?)?;
    let sizes = match &p.groundtruth {
        Some(g) => Some(io::read_groundtruth(g)?.image_map()),
        None => None,
    };
    let proposals = io::read_proposals(require(&p.proposals, "proposals")?, sizes.as_ref())?;
    stages::rescore(
        &proposals,
        &proposal_emb,
        adapted,
        vocab,
        &class_emb,
        &cfg.rescore,
        cfg.selector.fallback_on_empty,
        workers,
    )
}

/// Writes metrics.json and report.md into `out_dir`.
pub fn cmd_eval(cfg: &RunConfig, detections: &Path, adapted: Option<&Path>, out_dir: &Path) -> CliResult<String> {
    let p = &cfg.paths;
    let vocab = io::read_vocabulary(require(&p.vocabulary, "vocabulary")?)?;
    let gt = io::read_groundtruth(require(&p.groundtruth, "ground truth")?)?;
    let dets: Vec<Detection> = io::read_jsonl(detections)?;
    let adapted: Option<Vec<AdaptedVocabulary>> = adapted.map(io::read_jsonl).transpose()?;
    eval_loaded(cfg, &vocab, &gt, &dets, adapted.as_deref(), out_dir)
}

fn eval_loaded(
    cfg: &RunConfig,
    vocab: &Vocabulary,
    gt: &GroundTruth,
    dets: &[Detection],
    adapted: Option<&[AdaptedVocabulary]>,
    out_dir: &Path,
) -> CliResult<String> {
    let groups = cfg.load_groups()?;
    let report = evaluate_all(dets, &gt.boxes, vocab, groups.as_ref(), adapted, Interpolation::Point101)?;
    let json = metrics_json(&report, vocab, groups.as_ref());
    write_text(&out_dir.join(METRICS_FILE), &json)?;
    let selector = adapted.and_then(|a| AdaptSummary::of(a).selector);
    write_text(
        &out_dir.join(REPORT_FILE),
        &report_markdown(&report, vocab, groups.as_ref(), selector),
    )?;
    Ok(json)
}

fn sha256_file(path: &Path) -> CliResult<String> {
    let bytes = fs::read(path).map_err(|e| vocada_core::Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

#[derive(Serialize)]
struct OutputRecord {
    file: &'static str,
    sha256: String,
}

#[derive(Serialize)]
struct StageRecord {
    name: &'static str,
    status: &'static str,
    outputs: Vec<OutputRecord>,
}

#[derive(Serialize)]
struct Manifest<'a> {
    status: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    failed_stage: Option<&'static str>,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
    selector: &'a vocada_core::SelectorConfig,
    rescore: &'a vocada_core::RescoreConfig,
    inputs: BTreeMap<&'static str, String>,
    stages: Vec<StageRecord>,
}

pub const STAGES: [&str; 5] = ["captions", "nouns", "adapt", "rescore", "eval"];

#[derive(Debug)]
pub struct RunOutcome {
    pub output_dir: PathBuf,
    pub summary: AdaptSummary,
    pub metrics: Option<String>,
}

fn input_digests(cfg: &RunConfig) -> CliResult<BTreeMap<&'static str, String>> {
    let p = &cfg.paths;
    let mut inputs = BTreeMap::new();
    let mut add = |name: &'static str, path: &Option<PathBuf>, sidecar: bool| -> CliResult<()> {
        if let Some(path) = path {
            if path.is_file() {
                inputs.insert(name, sha256_file(path)?);
                let keys = keys_sidecar(path);
                if sidecar && keys.is_file() {
                    inputs.insert(name, format!("{}+{}", inputs[name], sha256_file(&keys)?));
                }
            }
        }
        Ok(())
    };
    add("vocabulary", &p.vocabulary, false)?;
    add("captions", &p.captions, false)?;
    add("lexicon", &p.lexicon, false)?;
    add("class_embeddings", &p.class_embeddings, true)?;
    add("phrase_embeddings", &p.phrase_embeddings, true)?;
    add("proposals", &p.proposals, false)?;
    add("proposal_embeddings", &p.proposal_embeddings, true)?;
    add("groundtruth", &p.groundtruth, false)?;
    add("captioner_prompt", &p.captioner_prompt, false)?;
    if p.lexicon.is_none() {
        let lex = TagLexicon::default_english();
        inputs.insert("lexicon", format!("bundled {} v{}", lex.name, lex.version));
    }
    if p.captions.is_none() {
        if let Some(g) = &cfg.gateway {
            inputs.insert("captions", format!("gateway model {}", g.captioning_model()));
        }
    }
    Ok(inputs)
}

/// Runs every stage into the configured output directory.
///
/// Stage outputs are written as soon as each stage finishes. On failure the
/// manifest records the failing stage and the error is returned tagged with
/// the stage name.
pub fn cmd_run(cfg: &RunConfig) -> CliResult<RunOutcome> {
    cfg.validate()?;
    cfg.check_inputs()?;
    let out = require(&cfg.paths.output_dir, "output directory")?.to_path_buf();
    if cfg.paths.captions.is_none() && (cfg.gateway.is_none() || cfg.paths.images_dir.is_none()) {
        return Err(CliError::usage(
            "captions come from a captions file, or from a gateway with an images directory",
        ));
    }
    if cfg.paths.captions.is_none() && cfg.paths.groundtruth.is_none() {
        return Err(CliError::usage("gateway captioning needs the ground truth image table"));
    }
    check_adapt_inputs(cfg, true, true)?;
    require(&cfg.paths.vocabulary, "vocabulary")?;
    require(&cfg.paths.proposals, "proposals")?;
    require(&cfg.paths.proposal_embeddings, "proposal embeddings")?;
    require(&cfg.paths.class_embeddings, "class embeddings")?;
    fs::create_dir_all(&out).map_err(|e| vocada_core::Error::Io {
        path: out.clone(),
        source: e,
    })?;
    let inputs = input_digests(cfg)?;

    let mut records: Vec<StageRecord> = Vec::new();
    let result = run_stages(cfg, &out, &mut records);
    let (status, failed_stage, error) = match &result {
        Ok(_) => ("complete", None, None),
        Err(CliError::Stage { stage, source }) => ("incomplete", Some(*stage), Some(source.to_string())),
        Err(e) => ("incomplete", None, Some(e.to_string())),
    };
    for name in STAGES {
        if !records.iter().any(|r| r.name == name) {
            let status = if Some(name) == failed_stage { "failed" } else { "not run" };
            records.push(StageRecord {
                name,
                status,
                outputs: Vec::new(),
            });
        }
    }
    let manifest = Manifest {
        status,
        failed_stage,
        error,
        selector: &cfg.selector,
        rescore: &cfg.rescore,
        inputs,
        stages: records,
    };
    let mut text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    text.push('\n');
    write_text(&out.join(MANIFEST_FILE), &text)?;
    result
}

fn stage<T>(name: &'static str, r: CliResult<T>) -> CliResult<T> {
    r.map_err(|e| CliError::Stage {
        stage: name,
        source: Box::new(e),
    })
}

fn finish_stage(out: &Path, name: &'static str, files: &[&'static str], records: &mut Vec<StageRecord>) -> CliResult<()> {
    let outputs = files
        .iter()
        .map(|f| {
            Ok(OutputRecord {
                file: f,
                sha256: sha256_file(&out.join(f))?,
            })
        })
        .collect::<CliResult<Vec<_>>>()?;
    records.push(StageRecord {
        name,
        status: "done",
        outputs,
    });
    Ok(())
}

fn run_stages(cfg: &RunConfig, out: &Path, records: &mut Vec<StageRecord>) -> CliResult<RunOutcome> {
    let workers = Workers::new(cfg.concurrency)?;
    let p = &cfg.paths;
    let needs_gateway = p.captions.is_none() || cfg.selector.kind == SelectorKind::Llm;
    let gw = if needs_gateway { Some(gateway(cfg)?) } else { None };

    let captions = stage("captions", (|| {
        let captions: Vec<CaptionRecord> = match &p.captions {
            Some(path) => io::read_jsonl(path)?,
            None => {
                let gt = io::read_groundtruth(require(&p.groundtruth, "ground truth")?)?;
                let images = require(&p.images_dir, "images directory")?;
                let prompt = captioner_prompt(cfg)?;
                stages::captions_from_gateway(gw.as_ref().expect("gateway built"), &gt, images, &prompt, &workers)?
            }
        };
        io::ensure_unique_ids(captions.iter().map(|c| c.image_id.as_str()))?;
        write_jsonl(&out.join(CAPTIONS_FILE), &captions)?;
        Ok(captions)
    })())?;
    finish_stage(out, "captions", &[CAPTIONS_FILE], records)?;

    let nouns = stage("nouns", (|| {
        let lexicon = load_lexicon(p.lexicon.as_deref())?;
        let nouns = stages::extract_nouns(&captions, &lexicon, &workers)?;
        write_jsonl(&out.join(NOUNS_FILE), &nouns)?;
        Ok(nouns)
    })())?;
    finish_stage(out, "nouns", &[NOUNS_FILE], records)?;

    let (vocab, adapted, summary) = stage("adapt", (|| {
        let ctx = AdaptContext::load(cfg)?;
        let adapted = run_adapt(cfg, &ctx, &nouns, Some(&captions), gw.as_ref(), &workers)?;
        write_jsonl(&out.join(ADAPTED_FILE), &adapted)?;
        let summary = AdaptSummary::of(&adapted);
        Ok((ctx.vocab, adapted, summary))
    })())?;
    log::info!("{summary}");
    finish_stage(out, "adapt", &[ADAPTED_FILE], records)?;

    let dets = stage("rescore", (|| {
        let dets = rescore_loaded(cfg, &vocab, &adapted, &workers)?;
        write_jsonl(&out.join(DETECTIONS_FILE), &dets)?;
        Ok(dets)
    })())?;
    finish_stage(out, "rescore", &[DETECTIONS_FILE], records)?;

    let metrics = match &p.groundtruth {
        Some(gt_path) => {
            let json = stage("eval", (|| {
                let gt = io::read_groundtruth(gt_path)?;
                eval_loaded(cfg, &vocab, &gt, &dets, Some(&adapted), out)
            })())?;
            finish_stage(out, "eval", &[METRICS_FILE, REPORT_FILE], records)?;
            Some(json)
        }
        None => {
            records.push(StageRecord {
                name: "eval",
                status: "skipped",
                outputs: Vec::new(),
            });
            None
        }
    };
    Ok(RunOutcome {
        output_dir: out.to_path_buf(),
        summary,
        metrics,
    })
}
