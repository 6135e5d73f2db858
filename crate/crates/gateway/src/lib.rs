//! HTTP access to hosted vision-language and chat models.
//!
//! Both the image captioner and the LLM class selector are reached through
//! an OpenAI-compatible `/chat/completions` endpoint. The [`Gateway`] adds a
//! content-addressed response cache, retries with exponential backoff on
//! transport errors and HTTP 429/5xx, and a hard bound on concurrently
//! outstanding requests.

mod cache;
mod client;
mod error;
#[cfg(feature = "mock")]
pub mod mock;
mod wire;

pub use cache::{cache_key, ResponseCache};
pub use client::{CaptionerPrompt, Gateway, GatewayConfig, ImageRef, DEFAULT_API_KEY_ENV};
pub use error::GatewayError;
pub use wire::{ChatRequest, ChatResponse};
