use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("gateway configuration: {0}")]
    Config(String),

    #[error("cannot read image {path}: {source}")]
    Image {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("request for image {image_id} failed after {} attempt(s): {}", .attempts.len(), .attempts.join("; "))]
    Exhausted { image_id: String, attempts: Vec<String> },

    #[error("request for image {image_id} rejected with HTTP {status}: {body}")]
    Rejected {
        image_id: String,
        status: u16,
        body: String,
    },

    #[error("malformed response for image {image_id}: {message}")]
    BadResponse { image_id: String, message: String },

    #[error("empty assistant content for image {image_id}")]
    EmptyContent { image_id: String },

    #[error("cache {path}: {message}")]
    Cache { path: PathBuf, message: String },
}
