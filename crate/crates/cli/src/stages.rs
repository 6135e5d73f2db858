//! The pipeline stages as in-memory transformations. File handling lives in
//! [`crate::commands`].

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::path::Path;

use rayon::prelude::*;
use vocada_core::io::{GroundTruth, LoadedProposals};
use vocada_core::nouns::extract;
use vocada_core::selector::{
    build_llm_system_prompt, build_llm_user_message, parse_llm_selection, select_baseline, select_embed_topk,
    select_oracle, SelectorConfig,
};
use vocada_core::{
    AdaptedVocabulary, CaptionRecord, Detection, EmbeddingMatrix, GroundTruthBox, NounPhraseSet, RescoreConfig,
    SelectorKind, TagLexicon, Vocabulary,
};
use vocada_gateway::{CaptionerPrompt, Gateway, ImageRef};

use crate::error::{CliError, CliResult};

/// Bounded worker pool whose maps return results in input order.
pub struct Workers {
    pool: rayon::ThreadPool,
}

impl Workers {
    pub fn new(threads: usize) -> CliResult<Self> {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads.max(1))
            .build()
            .map_err(|e| CliError::usage(format!("worker pool: {e}")))?;
        Ok(Self { pool })
    }

    pub fn map<T, R, F>(&self, items: &[T], f: F) -> Vec<R>
    where
        T: Sync,
        R: Send,
        F: Fn(&T) -> R + Sync + Send,
    {
        self.pool.install(|| items.par_iter().map(f).collect())
    }

    /// Like [`Workers::map`], stopping at the first error in input order.
    pub fn try_map<T, R, F>(&self, items: &[T], f: F) -> CliResult<Vec<R>>
    where
        T: Sync,
        R: Send,
        F: Fn(&T) -> CliResult<R> + Sync + Send,
    {
        self.map(items, f).into_iter().collect()
    }
}

pub fn captions_from_gateway(
    gateway: &Gateway,
    groundtruth: &GroundTruth,
    images_dir: &Path,
    prompt: &CaptionerPrompt,
    workers: &Workers,
) -> CliResult<Vec<CaptionRecord>> {
    workers.try_map(&groundtruth.images, |img| {
        let file = img.file_name.clone().unwrap_or_else(|| img.image_id.clone());
        let image = ImageRef::Path(images_dir.join(file));
        Ok(gateway.caption_image(&img.image_id, &image, prompt)?)
    })
}

pub fn extract_nouns(captions: &[CaptionRecord], lexicon: &TagLexicon, workers: &Workers) -> CliResult<Vec<NounPhraseSet>> {
    vocada_core::io::ensure_unique_ids(captions.iter().map(|c| c.image_id.as_str()))?;
    Ok(workers.map(captions, |c| extract(c, lexicon)))
}

/// Optional inputs a selector may need.
#[derive(Default, Clone, Copy)]
pub struct SelectorDeps<'a> {
    pub class_emb: Option<&'a EmbeddingMatrix>,
    pub phrase_emb: Option<&'a EmbeddingMatrix>,
    pub groundtruth: Option<&'a GroundTruth>,
    pub gateway: Option<&'a Gateway>,
    pub captions: Option<&'a [CaptionRecord]>,
}

/// Fails when the configured selector lacks an input it needs.
pub fn check_selector_deps(kind: SelectorKind, has: &SelectorDeps<'_>) -> CliResult<()> {
    let missing = |what: &str| Err(CliError::usage(format!("selector {kind} needs {what}")));
    match kind {
        SelectorKind::Baseline => Ok(()),
        SelectorKind::Oracle if has.groundtruth.is_none() => missing("ground truth"),
        SelectorKind::EmbedTopk if has.class_emb.is_none() => missing("class embeddings"),
        SelectorKind::EmbedTopk if has.phrase_emb.is_none() => missing("phrase embeddings"),
        SelectorKind::Llm if has.gateway.is_none() => missing("a gateway configuration"),
        SelectorKind::Llm if has.captions.is_none() => missing("captions"),
        _ => Ok(()),
    }
}

/// One adapted vocabulary per noun-phrase set, in input order.
pub fn adapt(
    nouns: &[NounPhraseSet],
    vocab: &Vocabulary,
    cfg: &SelectorConfig,
    deps: &SelectorDeps<'_>,
    workers: &Workers,
) -> CliResult<Vec<AdaptedVocabulary>> {
    cfg.validate()?;
    check_selector_deps(cfg.kind, deps)?;
    vocada_core::io::ensure_unique_ids(nouns.iter().map(|n| n.image_id.as_str()))?;
    match cfg.kind {
        SelectorKind::Baseline => Ok(nouns.iter().map(|n| select_baseline(&n.image_id, vocab)).collect()),
        SelectorKind::Oracle => {
            let by_image: BTreeMap<&str, Vec<GroundTruthBox>> =
                deps.groundtruth.expect("checked").boxes_by_image();
            nouns
                .iter()
                .map(|n| {
                    let gts = by_image.get(n.image_id.as_str()).map(Vec::as_slice).unwrap_or(&[]);
                    Ok(select_oracle(&n.image_id, gts, vocab)?)
                })
                .collect()
        }
        SelectorKind::EmbedTopk => {
            let (ce, pe) = (deps.class_emb.expect("checked"), deps.phrase_emb.expect("checked"));
            workers.try_map(nouns, |n| Ok(select_embed_topk(n, pe, ce, vocab, cfg)?))
        }
        SelectorKind::Llm => {
            let gateway = deps.gateway.expect("checked");
            let captions: HashMap<&str, &str> = deps
                .captions
                .expect("checked")
                .iter()
                .map(|c| (c.image_id.as_str(), c.caption.as_str()))
                .collect();
            let system = build_llm_system_prompt(vocab);
            workers.try_map(nouns, |n| {
                let caption = captions
                    .get(n.image_id.as_str())
                    .ok_or_else(|| CliError::usage(format!("no caption for image {}", n.image_id)))?;
                let user = build_llm_user_message(caption, &n.phrases);
                let raw = gateway.chat_select(&n.image_id, &system, &user)?;
                let sel = parse_llm_selection(&n.image_id, &raw, vocab, cfg);
                if !sel.unmatched.is_empty() {
                    log::info!(
                        "image {}: {} of {} selected names matched no class: {}",
                        n.image_id,
                        sel.unmatched.len(),
                        sel.candidates,
                        sel.unmatched.join(", ")
                    );
                }
                Ok(sel.adapted)
            })
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdaptSummary {
    pub selector: Option<SelectorKind>,
    pub images: usize,
    pub fallbacks: usize,
    pub mean_size: f64,
}

impl AdaptSummary {
    pub fn of(adapted: &[AdaptedVocabulary]) -> Self {
        let images = adapted.len();
        let total: usize = adapted.iter().map(|a| a.class_ids.len()).sum();
        let first = adapted.first().map(|a| a.selector);
        Self {
            selector: first.filter(|k| adapted.iter().all(|a| a.selector == *k)),
            images,
            fallbacks: adapted.iter().filter(|a| a.fallback_used).count(),
            mean_size: if images == 0 { 0.0 } else { total as f64 / images as f64 },
        }
    }
}

impl fmt::Display for AdaptSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sel = self.selector.map(|k| k.as_str()).unwrap_or("mixed");
        write!(
            f,
            "adapted {} images with {sel}: {} fallbacks, mean vocabulary size {:.2}",
            self.images, self.fallbacks, self.mean_size
        )
    }
}

/// Detections for every proposal, in proposal-file order.
///
/// Images missing from `adapted` use the full vocabulary when
/// `fallback_on_missing` is set and are an error otherwise. Images whose
/// adapted set is empty produce no detections.
#[allow(clippy::too_many_arguments)]
pub fn rescore(
    proposals: &LoadedProposals,
    proposal_emb: &EmbeddingMatrix,
    adapted: &[AdaptedVocabulary],
    vocab: &Vocabulary,
    class_emb: &EmbeddingMatrix,
    cfg: &RescoreConfig,
    fallback_on_missing: bool,
    workers: &Workers,
) -> CliResult<Vec<Detection>> {
    cfg.validate()?;
    vocada_core::io::ensure_unique_ids(adapted.iter().map(|a| a.image_id.as_str()))?;
    for a in adapted {
        if let Some(&c) = a.class_ids.iter().find(|c| !vocab.contains(**c)) {
            return Err(vocada_core::Error::UnknownClass(c).into());
        }
    }
    let by_image: HashMap<&str, &AdaptedVocabulary> = adapted.iter().map(|a| (a.image_id.as_str(), a)).collect();
    let per_image = workers.try_map(&proposals.images, |img| {
        let fallback;
        let a = match by_image.get(img.image_id.as_str()) {
            Some(a) => *a,
            None if fallback_on_missing => {
                log::warn!("image {} has no adapted vocabulary, using the full vocabulary", img.image_id);
                fallback = select_baseline(&img.image_id, vocab);
                &fallback
            }
            None => {
                return Err(CliError::Data(vocada_core::Error::Data(format!(
                    "image {} has no adapted vocabulary",
                    img.image_id
                ))))
            }
        };
        if a.class_ids.is_empty() {
            log::info!("image {}: empty adapted vocabulary, no detections", img.image_id);
            return Ok(Vec::new());
        }
        let mut dets = vocada_core::rescore::rescore_image(&img.proposals, proposal_emb, a, class_emb, cfg)?;
        if cfg.score_threshold > 0.0 {
            dets.retain(|d| d.score >= cfg.score_threshold);
        }
        Ok(dets)
    })?;
    Ok(per_image.into_iter().flatten().collect())
}
