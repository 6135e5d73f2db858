use std::collections::HashMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use crate::domain::normalize_name;
use crate::error::{Error, Result};

const DEFAULT_LEXICON: &str = include_str!("../../resources/lexicon-en.tsv");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Tag {
    Det,
    Adj,
    Noun,
    Verb,
    Prep,
    Conj,
    Pron,
    Num,
    Other,
}

impl Tag {
    pub fn as_str(&self) -> &'static str {
        match self {
            Tag::Det => "DET",
            Tag::Adj => "ADJ",
            Tag::Noun => "NOUN",
            Tag::Verb => "VERB",
            Tag::Prep => "PREP",
            Tag::Conj => "CONJ",
            Tag::Pron => "PRON",
            Tag::Num => "NUM",
            Tag::Other => "OTHER",
        }
    }
}

impl fmt::Display for Tag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Tag {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Ok(match s {
            "DET" => Tag::Det,
            "ADJ" => Tag::Adj,
            "NOUN" => Tag::Noun,
            "VERB" => Tag::Verb,
            "PREP" => Tag::Prep,
            "CONJ" => Tag::Conj,
            "PRON" => Tag::Pron,
            "NUM" => Tag::Num,
            "OTHER" => Tag::Other,
            other => return Err(format!("unknown tag \"{other}\"")),
        })
    }
}

/// Token → part-of-speech table.
///
/// On disk this is UTF-8 text with one `token<TAB>TAG` pair per line. Blank
/// lines are skipped; lines starting with `#` are comments, and the
/// comments `# name: ...` / `# version: ...` fill in the metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct TagLexicon {
    pub name: String,
    pub version: String,
    entries: HashMap<String, Tag>,
}

impl TagLexicon {
    /// The English lexicon bundled with the crate.
    pub fn default_english() -> Self {
        Self::parse(DEFAULT_LEXICON, Path::new("<bundled lexicon>")).expect("bundled lexicon parses")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }

    pub fn from_entries<'a>(entries: impl IntoIterator<Item = (&'a str, Tag)>) -> Self {
        Self {
            name: "inline".into(),
            version: "0".into(),
            entries: entries.into_iter().map(|(k, t)| (normalize_name(k), t)).collect(),
        }
    }

    pub fn parse(text: &str, origin: &Path) -> Result<Self> {
        let mut name = origin.display().to_string();
        let mut version = String::from("unversioned");
        let mut entries = HashMap::new();
        for (i, line) in text.lines().enumerate() {
            let err = |message: String| Error::Parse {
                path: origin.to_path_buf(),
                line: i + 1,
                message,
            };
            if let Some(comment) = line.strip_prefix('#') {
                let comment = comment.trim();
                if let Some(v) = comment.strip_prefix("name:") {
                    name = v.trim().to_string();
                } else if let Some(v) = comment.strip_prefix("version:") {
                    version = v.trim().to_string();
                }
                continue;
            }
            if line.trim().is_empty() {
                continue;
            }
            let (token, tag) = line
                .split_once('\t')
                .ok_or_else(|| err("expected token<TAB>TAG".into()))?;
            if normalize_name(token) != token || token.is_empty() {
                return Err(err(format!("token \"{token}\" is not in normalized form")));
            }
            let tag: Tag = tag.trim_end_matches('\r').parse().map_err(err)?;
            if entries.insert(token.to_string(), tag).is_some() {
                return Err(err(format!("duplicate token \"{token}\"")));
            }
        }
        if entries.is_empty() {
            return Err(Error::Parse {
                path: origin.to_path_buf(),
                line: 0,
                message: "lexicon has no entries".into(),
            });
        }
        Ok(Self {
            name,
            version,
            entries,
        })
    }

    pub fn get(&self, normalized: &str) -> Option<Tag> {
        self.entries.get(normalized).copied()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}
