//! Class selectors: each maps per-image evidence to a subset of the
//! vocabulary.
//!
//! * baseline keeps every class,
//! * oracle keeps the image's ground-truth classes,
//! * embed-topk unions the `k` nearest classes of every noun phrase,
//! * llm parses an asterisk-bulleted category list returned by a chat model.
//!
//! An empty selection falls back to the full vocabulary when
//! [`SelectorConfig::fallback_on_empty`] is set (oracle excepted).

use std::cmp::Ordering;
use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::domain::{
    AdaptedVocabulary, ClassId, GroundTruthBox, NounPhraseSet, SelectorKind, Vocabulary,
};
use crate::embedding::{cosine, EmbeddingMatrix};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SelectorConfig {
    pub kind: SelectorKind,
    pub k: usize,
    pub fallback_on_empty: bool,
    pub prompt_template: String,
}

impl Default for SelectorConfig {
    fn default() -> Self {
        Self {
            kind: SelectorKind::Baseline,
            k: 1,
            fallback_on_empty: true,
            prompt_template: "a {}".into(),
        }
    }
}

impl SelectorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::Config("k must be at least 1".into()));
        }
        if self.prompt_template.matches("{}").count() != 1 {
            return Err(Error::Config(format!(
                "prompt template \"{}\" must contain exactly one {{}}",
                self.prompt_template
            )));
        }
        Ok(())
    }

    /// Expands the prompt template around `text`.
    pub fn apply_template(&self, text: &str) -> String {
        self.prompt_template.replacen("{}", text, 1)
    }
}

/// Embedding-table key of a class row.
pub fn class_key(id: ClassId) -> String {
    id.0.to_string()
}

/// The `k` candidates most similar to `query`, best first.
///
/// Both sides are unit vectors, so the dot product is the cosine. Equal
/// scores keep ascending candidate row order.
pub fn cosine_topk(query: &[f32], candidates: &EmbeddingMatrix, k: usize) -> Result<Vec<(String, f64)>> {
    if query.len() != candidates.dim() {
        return Err(Error::DimensionMismatch {
            expected: candidates.dim(),
            actual: query.len(),
        });
    }
    if k == 0 {
        return Err(Error::Config("k must be at least 1".into()));
    }
    let mut scored: Vec<(usize, f64)> = (0..candidates.rows())
        .map(|i| (i, cosine(query, candidates.row(i))))
        .collect();
    scored.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap_or(Ordering::Equal).then(a.0.cmp(&b.0)));
    Ok(scored
        .into_iter()
        .take(k)
        .map(|(i, s)| (candidates.keys()[i].clone(), s))
        .collect())
}

/// [`cosine_topk`] with the query looked up by key in `queries`.
pub fn cosine_topk_by_key(
    query_key: &str,
    queries: &EmbeddingMatrix,
    candidates: &EmbeddingMatrix,
    k: usize,
) -> Result<Vec<(String, f64)>> {
    let query = queries
        .get(query_key)
        .ok_or_else(|| Error::UnknownKey(query_key.to_string()))?;
    cosine_topk(query, candidates, k)
}

fn finish(
    image_id: &str,
    class_ids: BTreeSet<ClassId>,
    kind: SelectorKind,
    vocab: &Vocabulary,
    fallback_on_empty: bool,
) -> AdaptedVocabulary {
    if class_ids.is_empty() && fallback_on_empty {
        AdaptedVocabulary {
            image_id: image_id.to_string(),
            class_ids: vocab.ids(),
            selector: kind,
            fallback_used: true,
        }
    } else {
        AdaptedVocabulary {
            image_id: image_id.to_string(),
            class_ids,
            selector: kind,
            fallback_used: false,
        }
    }
}

pub fn select_baseline(image_id: &str, vocab: &Vocabulary) -> AdaptedVocabulary {
    AdaptedVocabulary {
        image_id: image_id.to_string(),
        class_ids: vocab.ids(),
        selector: SelectorKind::Baseline,
        fallback_used: false,
    }
}

/// Distinct ground-truth classes of one image. Never falls back.
pub fn select_oracle(image_id: &str, gt: &[GroundTruthBox], vocab: &Vocabulary) -> Result<AdaptedVocabulary> {
    let mut ids = BTreeSet::new();
    for g in gt {
        if !vocab.contains(g.class_id) {
            return Err(Error::UnknownClass(g.class_id));
        }
        ids.insert(g.class_id);
    }
    Ok(AdaptedVocabulary {
        image_id: image_id.to_string(),
        class_ids: ids,
        selector: SelectorKind::Oracle,
        fallback_used: false,
    })
}

/// Class rows of `class_emb` restricted to the vocabulary, in file order.
///
/// Fails if any vocabulary class lacks a row.
pub fn vocabulary_rows(class_emb: &EmbeddingMatrix, vocab: &Vocabulary) -> Result<EmbeddingMatrix> {
    for c in vocab.classes() {
        if class_emb.index_of(&class_key(c.id)).is_none() {
            return Err(Error::MissingClassEmbedding(c.id));
        }
    }
    let wanted: BTreeSet<String> = vocab.classes().iter().map(|c| class_key(c.id)).collect();
    Ok(class_emb.filter(|k| wanted.contains(k)))
}

/// Union over phrases of each phrase's top-`k` classes.
///
/// Phrase rows are keyed by the normalized phrase text; class rows by the
/// decimal class id.
pub fn select_embed_topk(
    phrases: &NounPhraseSet,
    phrase_emb: &EmbeddingMatrix,
    class_emb: &EmbeddingMatrix,
    vocab: &Vocabulary,
    cfg: &SelectorConfig,
) -> Result<AdaptedVocabulary> {
    cfg.validate()?;
    let missing: Vec<String> = phrases
        .phrases
        .iter()
        .filter(|p| phrase_emb.index_of(p).is_none())
        .cloned()
        .collect();
    if !missing.is_empty() {
        return Err(Error::MissingPhraseEmbeddings {
            image_id: phrases.image_id.clone(),
            phrases: missing,
        });
    }
    let candidates = vocabulary_rows(class_emb, vocab)?;
    let mut ids = BTreeSet::new();
    for phrase in &phrases.phrases {
        for (key, _) in cosine_topk_by_key(phrase, phrase_emb, &candidates, cfg.k)? {
            let id: u32 = key.parse().expect("vocabulary rows are keyed by class id");
            ids.insert(ClassId(id));
        }
    }
    Ok(finish(
        &phrases.image_id,
        ids,
        SelectorKind::EmbedTopk,
        vocab,
        cfg.fallback_on_empty,
    ))
}

const LLM_INSTRUCTIONS: &str = "\
You are a category selector for an object detector. For every request you \
receive two inputs: a description of an image, and a list of noun phrases \
extracted from that description.

Your task is to select, from the category list below, every category that is \
likely to appear in the image. Use the description and the noun phrases as \
evidence. An object may be mentioned under a different name than the category \
name, so take the listed synonyms into account. Only choose categories from \
the list, and write each selected category exactly as its name appears in the \
list.

Output format: one selected category per line. Start every line with an \
asterisk \"*\" and a space, then the category name, for example:
* category name

Do not output anything else.

Categories:
";

/// System prompt listing the task and the whole vocabulary with synonyms.
pub fn build_llm_system_prompt(vocab: &Vocabulary) -> String {
    let mut prompt = String::from(LLM_INSTRUCTIONS);
    for c in vocab.classes() {
        prompt.push_str("- ");
        prompt.push_str(&c.name);
        if !c.synonyms.is_empty() {
            prompt.push_str(" (synonyms: ");
            prompt.push_str(&c.synonyms.join(", "));
            prompt.push(')');
        }
        prompt.push('\n');
    }
    prompt
}

/// Per-image user message: the description, then the extracted phrases.
pub fn build_llm_user_message(caption: &str, phrases: &[String]) -> String {
    format!(
        "Image description: {}\nNoun phrases: {}",
        caption.trim(),
        phrases.join(", ")
    )
}

/// Parsed LLM selection with diagnostics.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LlmSelection {
    pub adapted: AdaptedVocabulary,
    /// Number of bullet lines found.
    pub candidates: usize,
    /// Bullet texts that matched no class name or synonym.
    pub unmatched: Vec<String>,
}

/// The candidate text of a `* name` bullet line, if `line` is one.
fn bullet_text(line: &str) -> Option<&str> {
    let rest = line.trim_start().strip_prefix('*')?;
    if !rest.starts_with(char::is_whitespace) {
        return None;
    }
    let text = rest.trim();
    (!text.is_empty()).then_some(text)
}

pub fn parse_llm_selection(
    image_id: &str,
    raw: &str,
    vocab: &Vocabulary,
    cfg: &SelectorConfig,
) -> LlmSelection {
    let mut ids = BTreeSet::new();
    let mut candidates = 0;
    let mut unmatched = Vec::new();
    for line in raw.lines() {
        let Some(text) = bullet_text(line) else { continue };
        candidates += 1;
        match vocab.lookup(text) {
            Some(id) => {
                ids.insert(id);
            }
            None => unmatched.push(text.to_string()),
        }
    }
    LlmSelection {
        adapted: finish(image_id, ids, SelectorKind::Llm, vocab, cfg.fallback_on_empty),
        candidates,
        unmatched,
    }
}
