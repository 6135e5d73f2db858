use std::path::PathBuf;

use thiserror::Error;

use crate::domain::{ClassId, Violation};

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid vocabulary: {}", join(.0))]
    InvalidVocabulary(Vec<Violation>),

    #[error("embedding dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("no embedding for key \"{0}\"")]
    UnknownKey(String),

    #[error("missing phrase embeddings for image {image_id}: {}", .phrases.join(", "))]
    MissingPhraseEmbeddings {
        image_id: String,
        phrases: Vec<String>,
    },

    #[error("class {0} is not in the vocabulary")]
    UnknownClass(ClassId),

    #[error("class {0} has no embedding")]
    MissingClassEmbedding(ClassId),

    #[error("adapted vocabulary for image {0} is empty")]
    EmptyAdaptedVocabulary(String),

    #[error("invalid embedding matrix: {0}")]
    Embedding(String),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("duplicate image id \"{0}\"")]
    DuplicateImage(String),

    #[error("invalid data: {0}")]
    Data(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

fn join(v: &[Violation]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join("; ")
}
