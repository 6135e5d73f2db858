//! Test-time vocabulary adaptation for open-vocabulary object detection.
//!
//! Given per-image captions, this crate extracts noun phrases, selects the
//! relevant subset of a user vocabulary, re-classifies detector proposals
//! against that subset, and scores both the detections and the selections.

pub mod domain;
pub mod embedding;
pub mod error;
pub mod io;
pub mod metrics;
pub mod nouns;
pub mod rescore;
pub mod selector;

pub use domain::{
    normalize_name, validate_vocabulary, AdaptedVocabulary, BBox, CaptionRecord, ClassEntry, ClassId, Detection,
    GroundTruthBox, ImageRecord, NounPhraseSet, Proposal, SelectorKind, Violation, Vocabulary,
};
pub use embedding::EmbeddingMatrix;
pub use error::{Error, Result};
pub use metrics::{EvalReport, Interpolation, Split};
pub use nouns::{Tag, TagLexicon};
pub use rescore::{RescoreConfig, ScoreMode};
pub use selector::SelectorConfig;
