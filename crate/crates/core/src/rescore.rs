//! Proposal classification restricted to an adapted vocabulary.
//!
//! With the full vocabulary this is plain zero-shot classification by
//! nearest class-text embedding; with a subset the argmax only ranges over
//! the kept classes. Boxes pass through untouched.

use serde::{Deserialize, Serialize};

use crate::domain::{AdaptedVocabulary, ClassId, Detection, Proposal};
use crate::embedding::{cosine, EmbeddingMatrix};
use crate::error::{Error, Result};
use crate::selector::class_key;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScoreMode {
    Cosine,
    Softmax,
}

impl std::str::FromStr for ScoreMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cosine" => Ok(ScoreMode::Cosine),
            "softmax" => Ok(ScoreMode::Softmax),
            other => Err(Error::Config(format!("unknown score mode \"{other}\""))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RescoreConfig {
    pub score_mode: ScoreMode,
    pub softmax_temperature: f64,
    /// Applied when writing detections; 0 keeps everything.
    pub score_threshold: f64,
    /// Multiply the class score by the proposal's objectness.
    pub fuse_objectness: bool,
}

impl Default for RescoreConfig {
    fn default() -> Self {
        Self {
            score_mode: ScoreMode::Cosine,
            softmax_temperature: 0.01,
            score_threshold: 0.0,
            fuse_objectness: false,
        }
    }
}

impl RescoreConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.softmax_temperature > 0.0 && self.softmax_temperature.is_finite()) {
            return Err(Error::Config("softmax temperature must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.score_threshold) {
            return Err(Error::Config("score threshold must lie in [0, 1]".into()));
        }
        Ok(())
    }
}

/// Class rows resolved once per adapted set, in ascending id order.
pub struct ClassBank<'a> {
    ids: Vec<ClassId>,
    rows: Vec<&'a [f32]>,
}

impl<'a> ClassBank<'a> {
    pub fn new(adapted: &AdaptedVocabulary, class_emb: &'a EmbeddingMatrix) -> Result<Self> {
        if adapted.class_ids.is_empty() {
            return Err(Error::EmptyAdaptedVocabulary(adapted.image_id.clone()));
        }
        let mut ids = Vec::with_capacity(adapted.class_ids.len());
        let mut rows = Vec::with_capacity(adapted.class_ids.len());
        for &id in &adapted.class_ids {
            let row = class_emb
                .get(&class_key(id))
                .ok_or(Error::MissingClassEmbedding(id))?;
            ids.push(id);
            rows.push(row);
        }
        Ok(Self { ids, rows })
    }

    /// Best class and its score for one proposal embedding.
    pub fn classify(&self, z: &[f32], objectness: f64, cfg: &RescoreConfig) -> Result<(ClassId, f64)> {
        if let Some(r) = self.rows.first() {
            if r.len() != z.len() {
                return Err(Error::DimensionMismatch {
                    expected: r.len(),
                    actual: z.len(),
                });
            }
        }
        let sims: Vec<f64> = self.rows.iter().map(|r| cosine(r, z)).collect();
        let mut best = 0;
        for (i, &s) in sims.iter().enumerate().skip(1) {
            // strict comparison keeps the lowest id on ties
            if s > sims[best] {
                best = i;
            }
        }
        let mut score = match cfg.score_mode {
            ScoreMode::Cosine => sims[best],
            ScoreMode::Softmax => softmax(&sims, cfg.softmax_temperature)[best],
        };
        if cfg.fuse_objectness {
            score *= objectness;
        }
        Ok((self.ids[best], score))
    }
}

/// Softmax of `sims / temperature`.
pub fn softmax(sims: &[f64], temperature: f64) -> Vec<f64> {
    let max = sims.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = sims.iter().map(|s| ((s - max) / temperature).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

pub fn classify_proposal(
    proposal: &Proposal,
    proposal_emb: &EmbeddingMatrix,
    adapted: &AdaptedVocabulary,
    class_emb: &EmbeddingMatrix,
    cfg: &RescoreConfig,
) -> Result<Detection> {
    let bank = ClassBank::new(adapted, class_emb)?;
    detect(&bank, proposal, proposal_emb, cfg)
}

fn detect(
    bank: &ClassBank<'_>,
    proposal: &Proposal,
    proposal_emb: &EmbeddingMatrix,
    cfg: &RescoreConfig,
) -> Result<Detection> {
    let z = proposal_emb
        .get(&proposal.embedding_key)
        .ok_or_else(|| Error::UnknownKey(proposal.embedding_key.clone()))?;
    let (class_id, score) = bank.classify(z, proposal.objectness, cfg)?;
    Ok(Detection {
        image_id: proposal.image_id.clone(),
        bbox: proposal.bbox,
        class_id,
        score,
    })
}

/// One detection per proposal, in proposal order.
pub fn rescore_image(
    proposals: &[Proposal],
    proposal_emb: &EmbeddingMatrix,
    adapted: &AdaptedVocabulary,
    class_emb: &EmbeddingMatrix,
    cfg: &RescoreConfig,
) -> Result<Vec<Detection>> {
    if proposals.is_empty() {
        return Ok(Vec::new());
    }
    cfg.validate()?;
    let bank = ClassBank::new(adapted, class_emb)?;
    proposals
        .iter()
        .map(|p| detect(&bank, p, proposal_emb, cfg))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{BBox, SelectorKind};

    fn adapted(ids: &[u32]) -> AdaptedVocabulary {
        AdaptedVocabulary {
            image_id: "img".into(),
            class_ids: ids.iter().map(|&i| ClassId(i)).collect(),
            selector: SelectorKind::Oracle,
            fallback_used: false,
        }
    }

    fn proposal(key: &str) -> Proposal {
        Proposal {
            image_id: "img".into(),
            bbox: BBox::new(0.0, 0.0, 10.0, 10.0),
            embedding_key: key.into(),
            objectness: 0.5,
        }
    }

    fn classes_ab() -> EmbeddingMatrix {
        EmbeddingMatrix::from_rows(2, [("1", vec![1.0, 0.0]), ("2", vec![0.0, 1.0])]).unwrap()
    }

    #[test]
    fn orthonormal_case() {
        let z = EmbeddingMatrix::from_rows(2, [("z", vec![0.0, 1.0])]).unwrap();
        let d = classify_proposal(&proposal("z"), &z, &adapted(&[1, 2]), &classes_ab(), &RescoreConfig::default())
            .unwrap();
        assert_eq!(d.class_id, ClassId(2));
        assert_eq!(d.score, 1.0);
        assert_eq!(d.bbox, BBox::new(0.0, 0.0, 10.0, 10.0));
    }

    #[test]
    fn distractor_removal() {
        // teapot = 1, curling = 2
        let classes =
            EmbeddingMatrix::from_rows(2, [("1", vec![0.995, 0.0999]), ("2", vec![0.9, 0.436])]).unwrap();
        let z = EmbeddingMatrix::from_rows(2, [("z", vec![0.98, 0.199])]).unwrap();
        let cfg = RescoreConfig::default();
        let full = classify_proposal(&proposal("z"), &z, &adapted(&[1, 2]), &classes, &cfg).unwrap();
        assert_eq!(full.class_id, ClassId(1));
        let restricted = classify_proposal(&proposal("z"), &z, &adapted(&[2]), &classes, &cfg).unwrap();
        assert_eq!(restricted.class_id, ClassId(2));
        assert!(full.score > restricted.score);
    }

    #[test]
    fn singleton_always_wins() {
        let z = EmbeddingMatrix::from_rows(2, [("z", vec![0.0, 1.0])]).unwrap();
        let d = classify_proposal(&proposal("z"), &z, &adapted(&[1]), &classes_ab(), &RescoreConfig::default())
            .unwrap();
        assert_eq!(d.class_id, ClassId(1));
        assert!(d.score.abs() < 1e-12);
    }

    #[test]
    fn ties_pick_lower_id() {
        let classes = EmbeddingMatrix::from_rows(2, [("5", vec![1.0, 1.0]), ("3", vec![1.0, 1.0])]).unwrap();
        let z = EmbeddingMatrix::from_rows(2, [("z", vec![1.0, 0.2])]).unwrap();
        let d = classify_proposal(&proposal("z"), &z, &adapted(&[3, 5]), &classes, &RescoreConfig::default())
            .unwrap();
        assert_eq!(d.class_id, ClassId(3));
    }

    #[test]
    fn softmax_and_objectness() {
        let z = EmbeddingMatrix::from_rows(2, [("z", vec![0.0, 1.0])]).unwrap();
        let cfg = RescoreConfig {
            score_mode: ScoreMode::Softmax,
            ..Default::default()
        };
        let d = classify_proposal(&proposal("z"), &z, &adapted(&[1, 2]), &classes_ab(), &cfg).unwrap();
        let expect = 1.0 / (1.0 + (-100.0f64).exp());
        assert!((d.score - expect).abs() < 1e-12);

        let fused = RescoreConfig {
            fuse_objectness: true,
            ..Default::default()
        };
        let d = classify_proposal(&proposal("z"), &z, &adapted(&[1, 2]), &classes_ab(), &fused).unwrap();
        assert_eq!(d.score, 0.5);
    }

    #[test]
    fn softmax_sums_to_one() {
        let p = softmax(&[0.3, -0.2, 0.9, 0.9], 0.01);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert_eq!(softmax(&[0.4], 0.01), vec![1.0]);
    }

    #[test]
    fn error_paths() {
        let z = EmbeddingMatrix::from_rows(2, [("z", vec![0.0, 1.0])]).unwrap();
        let cfg = RescoreConfig::default();
        assert!(matches!(
            classify_proposal(&proposal("z"), &z, &adapted(&[]), &classes_ab(), &cfg),
            Err(Error::EmptyAdaptedVocabulary(_))
        ));
        assert!(matches!(
            classify_proposal(&proposal("q"), &z, &adapted(&[1]), &classes_ab(), &cfg),
            Err(Error::UnknownKey(_))
        ));
        assert!(matches!(
            classify_proposal(&proposal("z"), &z, &adapted(&[4]), &classes_ab(), &cfg),
            Err(Error::MissingClassEmbedding(ClassId(4)))
        ));
        let z3 = EmbeddingMatrix::from_rows(3, [("z", vec![0.0, 1.0, 0.0])]).unwrap();
        assert!(matches!(
            classify_proposal(&proposal("z"), &z3, &adapted(&[1]), &classes_ab(), &cfg),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(RescoreConfig {
            softmax_temperature: 0.0,
            ..Default::default()
        }
        .validate()
        .is_err());
    }

    #[test]
    fn rescore_preserves_order() {
        assert!(rescore_image(&[], &classes_ab(), &adapted(&[]), &classes_ab(), &RescoreConfig::default())
            .unwrap()
            .is_empty());
        let z = EmbeddingMatrix::from_rows(2, [("a", vec![1.0, 0.1]), ("b", vec![0.1, 1.0])]).unwrap();
        let props = [proposal("b"), proposal("a"), proposal("b")];
        let dets = rescore_image(&props, &z, &adapted(&[1, 2]), &classes_ab(), &RescoreConfig::default()).unwrap();
        let labels: Vec<u32> = dets.iter().map(|d| d.class_id.0).collect();
        assert_eq!(labels, [2, 1, 2]);
    }
}
