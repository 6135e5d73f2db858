//! Shared domain types: vocabularies, per-image records, boxes, proposals,
//! detections and ground truth.
//!
//! Everything here is immutable after construction. A [`Vocabulary`] can
//! only be obtained through [`Vocabulary::new`], which runs
//! [`validate_vocabulary`], so downstream code may assume the surface-string
//! map is injective.

use std::collections::{BTreeSet, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};
use unicode_normalization::UnicodeNormalization;

use crate::error::{Error, Result};

/// Canonical comparison form of a class name, synonym or phrase.
///
/// Whitespace runs collapse to a single space, the result is trimmed,
/// lowercased and put in Unicode NFC.
pub fn normalize_name(s: &str) -> String {
    let lowered: String = s.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase();
    let composed: String = lowered.nfc().collect();
    // NFC composition can in rare cases surface characters that lowercase
    // further; loop until stable so the function is idempotent.
    let again: String = composed.to_lowercase().nfc().collect();
    if again == composed {
        composed
    } else {
        normalize_name(&again)
    }
}

/// Integer class identifier, stable within a vocabulary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ClassId(pub u32);

impl fmt::Display for ClassId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassEntry {
    pub id: ClassId,
    pub name: String,
    #[serde(default)]
    pub synonyms: Vec<String>,
}

impl ClassEntry {
    pub fn new(id: u32, name: &str, synonyms: &[&str]) -> Self {
        Self {
            id: ClassId(id),
            name: name.to_string(),
            synonyms: synonyms.iter().map(|s| s.to_string()).collect(),
        }
    }
}

/// A single broken vocabulary invariant.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    Empty,
    DuplicateId(ClassId),
    EmptyName(ClassId),
    /// Two surface forms of the same entry normalize to the same string.
    RepeatedSurface { id: ClassId, surface: String },
    /// A normalized surface form is claimed by two different entries.
    Collision {
        surface: String,
        first: ClassId,
        second: ClassId,
    },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Empty => write!(f, "vocabulary has no classes"),
            Violation::DuplicateId(id) => write!(f, "duplicate class id {id}"),
            Violation::EmptyName(id) => write!(f, "class {id} has an empty name"),
            Violation::RepeatedSurface { id, surface } => {
                write!(f, "class {id} lists \"{surface}\" more than once")
            }
            Violation::Collision {
                surface,
                first,
                second,
            } => write!(f, "\"{surface}\" maps to both class {first} and class {second}"),
        }
    }
}

/// Checks every vocabulary invariant and reports all violations found.
pub fn validate_vocabulary(classes: &[ClassEntry]) -> std::result::Result<(), Vec<Violation>> {
    let mut violations = Vec::new();
    if classes.is_empty() {
        violations.push(Violation::Empty);
    }
    let mut seen_ids = BTreeSet::new();
    let mut owner: HashMap<String, ClassId> = HashMap::new();
    for entry in classes {
        if !seen_ids.insert(entry.id) {
            violations.push(Violation::DuplicateId(entry.id));
        }
        if entry.name.trim().is_empty() {
            violations.push(Violation::EmptyName(entry.id));
        }
        let mut local = BTreeSet::new();
        for surface in std::iter::once(&entry.name).chain(&entry.synonyms) {
            let norm = normalize_name(surface);
            if norm.is_empty() {
                continue;
            }
            if !local.insert(norm.clone()) {
                violations.push(Violation::RepeatedSurface {
                    id: entry.id,
                    surface: norm,
                });
                continue;
            }
            match owner.get(&norm) {
                Some(&first) if first != entry.id => violations.push(Violation::Collision {
                    surface: norm,
                    first,
                    second: entry.id,
                }),
                Some(_) => {}
                None => {
                    owner.insert(norm, entry.id);
                }
            }
        }
    }
    if violations.is_empty() {
        Ok(())
    } else {
        Err(violations)
    }
}

/// A validated, ordered set of user-defined classes.
#[derive(Debug, Clone, PartialEq)]
pub struct Vocabulary {
    name: String,
    classes: Vec<ClassEntry>,
    by_id: HashMap<ClassId, usize>,
    by_name: HashMap<String, ClassId>,
    by_synonym: HashMap<String, ClassId>,
}

impl Vocabulary {
    pub fn new(name: impl Into<String>, classes: Vec<ClassEntry>) -> Result<Self> {
        validate_vocabulary(&classes).map_err(Error::InvalidVocabulary)?;
        let mut by_id = HashMap::new();
        let mut by_name = HashMap::new();
        let mut by_synonym = HashMap::new();
        for (i, c) in classes.iter().enumerate() {
            by_id.insert(c.id, i);
            by_name.insert(normalize_name(&c.name), c.id);
            for s in &c.synonyms {
                let norm = normalize_name(s);
                if !norm.is_empty() {
                    by_synonym.insert(norm, c.id);
                }
            }
        }
        Ok(Self {
            name: name.into(),
            classes,
            by_id,
            by_name,
            by_synonym,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn classes(&self) -> &[ClassEntry] {
        &self.classes
    }

    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }

    pub fn contains(&self, id: ClassId) -> bool {
        self.by_id.contains_key(&id)
    }

    pub fn get(&self, id: ClassId) -> Option<&ClassEntry> {
        self.by_id.get(&id).map(|&i| &self.classes[i])
    }

    pub fn ids(&self) -> BTreeSet<ClassId> {
        self.classes.iter().map(|c| c.id).collect()
    }

    /// Resolves a surface string against canonical names first, then synonyms.
    /// Matching is exact on the normalized form.
    pub fn lookup(&self, surface: &str) -> Option<ClassId> {
        let norm = normalize_name(surface);
        self.by_name
            .get(&norm)
            .or_else(|| self.by_synonym.get(&norm))
            .copied()
    }
}

/// Axis-aligned box in corner form `(x1, y1, x2, y2)`, pixel units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 4]", into = "[f64; 4]")]
pub struct BBox {
    pub x1: f64,
    pub y1: f64,
    pub x2: f64,
    pub y2: f64,
}

impl From<[f64; 4]> for BBox {
    fn from(v: [f64; 4]) -> Self {
        Self::new(v[0], v[1], v[2], v[3])
    }
}

impl From<BBox> for [f64; 4] {
    fn from(b: BBox) -> Self {
        [b.x1, b.y1, b.x2, b.y2]
    }
}

impl BBox {
    pub const fn new(x1: f64, y1: f64, x2: f64, y2: f64) -> Self {
        Self { x1, y1, x2, y2 }
    }

    /// Converts COCO `(x, y, w, h)` to corners.
    pub fn from_xywh(x: f64, y: f64, w: f64, h: f64) -> Self {
        Self::new(x, y, x + w, y + h)
    }

    pub fn width(&self) -> f64 {
        (self.x2 - self.x1).max(0.0)
    }

    pub fn height(&self) -> f64 {
        (self.y2 - self.y1).max(0.0)
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn is_finite(&self) -> bool {
        [self.x1, self.y1, self.x2, self.y2].iter().all(|v| v.is_finite())
    }

    /// Strictly positive extent on both axes.
    pub fn is_valid(&self) -> bool {
        self.is_finite() && self.x1 < self.x2 && self.y1 < self.y2
    }

    /// Clamps into `[0, width] x [0, height]`; returns whether anything moved.
    pub fn clamp_to(&mut self, width: f64, height: f64) -> bool {
        let before = *self;
        self.x1 = self.x1.clamp(0.0, width);
        self.x2 = self.x2.clamp(0.0, width);
        self.y1 = self.y1.clamp(0.0, height);
        self.y2 = self.y2.clamp(0.0, height);
        before != *self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageRecord {
    pub image_id: String,
    pub width: f64,
    pub height: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub file_name: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaptionRecord {
    pub image_id: String,
    pub caption: String,
    pub source: String,
}

/// Lowercase noun phrases of one caption, deduplicated in first-seen order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NounPhraseSet {
    pub image_id: String,
    pub phrases: Vec<String>,
}

impl NounPhraseSet {
    /// Builds the set, dropping blanks and later duplicates.
    pub fn new(image_id: impl Into<String>, phrases: impl IntoIterator<Item = String>) -> Self {
        let mut seen = std::collections::HashSet::new();
        let phrases = phrases
            .into_iter()
            .map(|p| p.trim().to_string())
            .filter(|p| !p.is_empty() && seen.insert(p.clone()))
            .collect();
        Self {
            image_id: image_id.into(),
            phrases,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Proposal {
    pub image_id: String,
    pub bbox: BBox,
    pub embedding_key: String,
    pub objectness: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SelectorKind {
    Baseline,
    Oracle,
    EmbedTopk,
    Llm,
}

impl SelectorKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            SelectorKind::Baseline => "baseline",
            SelectorKind::Oracle => "oracle",
            SelectorKind::EmbedTopk => "embed-topk",
            SelectorKind::Llm => "llm",
        }
    }
}

impl fmt::Display for SelectorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for SelectorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "baseline" => Ok(SelectorKind::Baseline),
            "oracle" => Ok(SelectorKind::Oracle),
            "embed-topk" => Ok(SelectorKind::EmbedTopk),
            "llm" => Ok(SelectorKind::Llm),
            other => Err(Error::Config(format!("unknown selector \"{other}\""))),
        }
    }
}

/// The per-image class subset produced by a selector.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AdaptedVocabulary {
    pub image_id: String,
    pub class_ids: BTreeSet<ClassId>,
    pub selector: SelectorKind,
    pub fallback_used: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub image_id: String,
    #[serde(rename = "box")]
    pub bbox: BBox,
    pub class_id: ClassId,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthBox {
    pub image_id: String,
    #[serde(rename = "box")]
    pub bbox: BBox,
    pub class_id: ClassId,
}
