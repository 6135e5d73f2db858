use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Condvar, Mutex};
use std::time::Duration;

use base64::Engine;
use rand::Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use vocada_core::CaptionRecord;

use crate::cache::{cache_key, ResponseCache};
use crate::error::GatewayError;
use crate::wire::{ChatRequest, ChatResponse};

pub const DEFAULT_API_KEY_ENV: &str = "VOCADA_API_KEY";

const DEFAULT_CAPTIONER_PROMPT: &str = include_str!("../resources/captioner_prompt.txt");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GatewayConfig {
    /// Root of the API, e.g. `http://localhost:8000/v1`. `/chat/completions` is appended.
    pub base_url: String,
    pub api_key_env: String,
    /// Model used for class selection, and for captioning unless `caption_model` is set.
    pub model: String,
    pub caption_model: Option<String>,
    pub timeout_secs: f64,
    pub max_retries: u32,
    pub backoff_initial_ms: u64,
    pub max_in_flight: usize,
    pub cache_dir: Option<PathBuf>,
    pub temperature: f64,
    pub max_tokens: u32,
}

impl Default for GatewayConfig {
    fn default() -> Self {
        Self {
            base_url: String::new(),
            api_key_env: DEFAULT_API_KEY_ENV.to_string(),
            model: String::new(),
            caption_model: None,
            timeout_secs: 120.0,
            max_retries: 3,
            backoff_initial_ms: 1000,
            max_in_flight: 4,
            cache_dir: None,
            temperature: 0.0,
            max_tokens: 1024,
        }
    }
}

impl GatewayConfig {
    pub fn validate(&self) -> Result<(), GatewayError> {
        let bad = |m: &str| Err(GatewayError::Config(m.to_string()));
        if self.base_url.trim().is_empty() {
            return bad("base_url is required");
        }
        if self.model.trim().is_empty() {
            return bad("model is required");
        }
        if self.max_in_flight < 1 {
            return bad("max_in_flight must be at least 1");
        }
        if !(self.timeout_secs.is_finite() && self.timeout_secs > 0.0) {
            return bad("timeout_secs must be positive");
        }
        if !(self.temperature.is_finite() && self.temperature >= 0.0) {
            return bad("temperature must be non-negative");
        }
        if self.max_tokens == 0 {
            return bad("max_tokens must be positive");
        }
        Ok(())
    }

    pub fn endpoint(&self) -> String {
        format!("{}/chat/completions", self.base_url.trim_end_matches('/'))
    }

    pub fn captioning_model(&self) -> &str {
        self.caption_model.as_deref().unwrap_or(&self.model)
    }
}

/// Instruction sent alongside every image to the captioning model.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CaptionerPrompt(String);

impl CaptionerPrompt {
    pub fn new(text: impl Into<String>) -> Result<Self, GatewayError> {
        let text = text.into();
        if text.trim().is_empty() {
            return Err(GatewayError::Config("captioner prompt is empty".into()));
        }
        Ok(Self(text))
    }

    pub fn load(path: &Path) -> Result<Self, GatewayError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| GatewayError::Config(format!("cannot read prompt {}: {e}", path.display())))?;
        Self::new(text)
    }

    pub fn text(&self) -> &str {
        &self.0
    }
}

impl Default for CaptionerPrompt {
    fn default() -> Self {
        Self(DEFAULT_CAPTIONER_PROMPT.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ImageRef {
    Path(PathBuf),
    Url(String),
}

impl ImageRef {
    /// `http(s)://` and `data:` references are URLs, anything else a local path.
    pub fn parse(s: &str) -> Self {
        if s.starts_with("http://") || s.starts_with("https://") || s.starts_with("data:") {
            ImageRef::Url(s.to_string())
        } else {
            ImageRef::Path(PathBuf::from(s))
        }
    }
}

fn mime_for(path: &Path) -> &'static str {
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(|e| e.to_ascii_lowercase());
    match ext.as_deref() {
        Some("png") => "image/png",
        Some("gif") => "image/gif",
        Some("webp") => "image/webp",
        Some("bmp") => "image/bmp",
        _ => "image/jpeg",
    }
}

struct Slots {
    used: Mutex<usize>,
    freed: Condvar,
    cap: usize,
}

struct Permit<'a>(&'a Slots);

impl Slots {
    fn acquire(&self) -> Permit<'_> {
        let mut used = self.used.lock().unwrap_or_else(|e| e.into_inner());
        while *used >= self.cap {
            used = self.freed.wait(used).unwrap_or_else(|e| e.into_inner());
        }
        *used += 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        let mut used = self.0.used.lock().unwrap_or_else(|e| e.into_inner());
        *used -= 1;
        self.0.freed.notify_one();
    }
}

enum Attempt {
    Done(String, Value),
    Retry(String),
    Fatal(GatewayError),
}

/// Thread-safe client. Share one instance across workers; the in-flight bound
/// is enforced per instance.
pub struct Gateway {
    cfg: GatewayConfig,
    endpoint: String,
    api_key: Option<String>,
    http: reqwest::blocking::Client,
    cache: Option<ResponseCache>,
    slots: Slots,
    sent: AtomicU64,
}

impl Gateway {
    /// Reads the API key from `cfg.api_key_env`; a missing variable means
    /// requests go out unauthenticated.
    pub fn new(cfg: GatewayConfig) -> Result<Self, GatewayError> {
        let api_key = std::env::var(&cfg.api_key_env).ok().filter(|k| !k.is_empty());
        if api_key.is_none() {
            log::debug!("{} not set, sending requests without authorization", cfg.api_key_env);
        }
        Self::with_api_key(cfg, api_key)
    }

    pub fn with_api_key(cfg: GatewayConfig, api_key: Option<String>) -> Result<Self, GatewayError> {
        cfg.validate()?;
        let http = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs_f64(cfg.timeout_secs))
            .build()
            .map_err(|e| GatewayError::Config(format!("http client: {e}")))?;
        let cache = cfg.cache_dir.as_ref().map(ResponseCache::new).transpose()?;
        Ok(Self {
            endpoint: cfg.endpoint(),
            slots: Slots {
                used: Mutex::new(0),
                freed: Condvar::new(),
                cap: cfg.max_in_flight,
            },
            cfg,
            api_key,
            http,
            cache,
            sent: AtomicU64::new(0),
        })
    }

    pub fn config(&self) -> &GatewayConfig {
        &self.cfg
    }

    /// HTTP requests issued so far, retries included.
    pub fn requests_sent(&self) -> u64 {
        self.sent.load(Ordering::SeqCst)
    }

    pub fn caption_image(
        &self,
        image_id: &str,
        image: &ImageRef,
        prompt: &CaptionerPrompt,
    ) -> Result<CaptionRecord, GatewayError> {
        let model = self.cfg.captioning_model().to_string();
        let (key, url) = match image {
            ImageRef::Path(path) => {
                let bytes = std::fs::read(path).map_err(|source| GatewayError::Image {
                    path: path.clone(),
                    source,
                })?;
                let key = cache_key(&[b"caption", model.as_bytes(), prompt.text().as_bytes(), &bytes]);
                let url = format!(
                    "data:{};base64,{}",
                    mime_for(path),
                    base64::engine::general_purpose::STANDARD.encode(&bytes)
                );
                (key, url)
            }
            ImageRef::Url(url) => {
                let key = cache_key(&[b"caption-url", model.as_bytes(), prompt.text().as_bytes(), url.as_bytes()]);
                (key, url.clone())
            }
        };
        let caption = self.complete(image_id, &key, || {
            ChatRequest::vision(&model, prompt.text(), &url, self.cfg.temperature, self.cfg.max_tokens)
        })?;
        Ok(CaptionRecord {
            image_id: image_id.to_string(),
            caption,
            source: model,
        })
    }

    /// Returns the raw assistant text for one selection request.
    pub fn chat_select(&self, image_id: &str, system_prompt: &str, user_message: &str) -> Result<String, GatewayError> {
        let model = &self.cfg.model;
        let key = cache_key(&[
            b"select",
            model.as_bytes(),
            system_prompt.as_bytes(),
            user_message.as_bytes(),
        ]);
        self.complete(image_id, &key, || {
            ChatRequest::text(model, system_prompt, user_message, self.cfg.temperature, self.cfg.max_tokens)
        })
    }

    fn complete(
        &self,
        image_id: &str,
        key: &str,
        build: impl FnOnce() -> ChatRequest,
    ) -> Result<String, GatewayError> {
        if let Some(cache) = &self.cache {
            if let Some(hit) = cache.get(key)? {
                log::debug!("cache hit for {image_id}");
                return Ok(hit);
            }
        }
        let body = serde_json::to_vec(&build()).expect("request serializes");
        let mut log_lines = Vec::new();
        for attempt in 0..=self.cfg.max_retries {
            if attempt > 0 {
                std::thread::sleep(self.backoff(attempt - 1));
            }
            match self.attempt(image_id, &body) {
                Attempt::Done(content, raw) => {
                    if let Some(cache) = &self.cache {
                        cache.put(key, &content, raw)?;
                    }
                    return Ok(content);
                }
                Attempt::Retry(why) => {
                    log::warn!("image {image_id}: attempt {} failed: {why}", attempt + 1);
                    log_lines.push(format!("attempt {}: {why}", attempt + 1));
                }
                Attempt::Fatal(e) => return Err(e),
            }
        }
        Err(GatewayError::Exhausted {
            image_id: image_id.to_string(),
            attempts: log_lines,
        })
    }

    fn backoff(&self, retry: u32) -> Duration {
        let base = self.cfg.backoff_initial_ms as f64 * 2f64.powi(retry.min(20) as i32);
        let jitter: f64 = rand::thread_rng().gen_range(0.0..0.5);
        Duration::from_secs_f64(base * (1.0 + jitter) / 1000.0)
    }

    fn attempt(&self, image_id: &str, body: &[u8]) -> Attempt {
        let _permit = self.slots.acquire();
        self.sent.fetch_add(1, Ordering::SeqCst);
        let mut req = self
            .http
            .post(&self.endpoint)
            .header(reqwest::header::CONTENT_TYPE, "application/json")
            .body(body.to_vec());
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let resp = match req.send() {
            Ok(r) => r,
            Err(e) if e.is_timeout() => {
                return Attempt::Retry(format!("timed out after {}s", self.cfg.timeout_secs));
            }
            Err(e) => return Attempt::Retry(format!("transport error: {e}")),
        };
        let status = resp.status();
        let text = match resp.text() {
            Ok(t) => t,
            Err(e) if e.is_timeout() => {
                return Attempt::Retry(format!("timed out after {}s", self.cfg.timeout_secs));
            }
            Err(e) => return Attempt::Retry(format!("reading body: {e}")),
        };
        if status.as_u16() == 429 || status.is_server_error() {
            return Attempt::Retry(format!("HTTP {}", status.as_u16()));
        }
        if !status.is_success() {
            return Attempt::Fatal(GatewayError::Rejected {
                image_id: image_id.to_string(),
                status: status.as_u16(),
                body: text,
            });
        }
        let bad = |message: String| {
            Attempt::Fatal(GatewayError::BadResponse {
                image_id: image_id.to_string(),
                message,
            })
        };
        let raw: Value = match serde_json::from_str(&text) {
            Ok(v) => v,
            Err(e) => return bad(format!("not JSON: {e}")),
        };
        let parsed: ChatResponse = match serde_json::from_value(raw.clone()) {
            Ok(p) => p,
            Err(e) => return bad(e.to_string()),
        };
        match parsed.content() {
            Some(c) if !c.trim().is_empty() => Attempt::Done(c.to_string(), raw),
            _ => Attempt::Fatal(GatewayError::EmptyContent {
                image_id: image_id.to_string(),
            }),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> GatewayConfig {
        GatewayConfig {
            base_url: "http://localhost:1/v1/".into(),
            model: "m".into(),
            ..Default::default()
        }
    }

    #[test]
    fn defaults() {
        let c = GatewayConfig::default();
        assert_eq!(c.timeout_secs, 120.0);
        assert_eq!(c.max_retries, 3);
        assert_eq!(c.backoff_initial_ms, 1000);
        assert_eq!(c.max_in_flight, 4);
        assert_eq!(c.temperature, 0.0);
        assert_eq!(c.max_tokens, 1024);
        assert_eq!(c.api_key_env, "VOCADA_API_KEY");
    }

    #[test]
    fn validation() {
        assert!(cfg().validate().is_ok());
        assert!(GatewayConfig::default().validate().is_err());
        assert!(GatewayConfig { max_in_flight: 0, ..cfg() }.validate().is_err());
        assert!(GatewayConfig { timeout_secs: 0.0, ..cfg() }.validate().is_err());
        assert_eq!(cfg().endpoint(), "http://localhost:1/v1/chat/completions");
    }

    #[test]
    fn config_from_json() {
        let c: GatewayConfig =
            serde_json::from_str(r#"{"base_url":"http://x/v1","model":"text-model","caption_model":"vision-model"}"#).unwrap();
        assert_eq!(c.captioning_model(), "vision-model");
        assert_eq!(c.max_in_flight, 4);
        assert!(serde_json::from_str::<GatewayConfig>(r#"{"bogus":1}"#).is_err());
    }

    #[test]
    fn prompt() {
        assert!(CaptionerPrompt::new("  ").is_err());
        let p = CaptionerPrompt::default();
        assert!(p.text().contains("primary"));
        assert!(p.text().contains("secondary"));
    }

    #[test]
    fn image_refs() {
        assert_eq!(ImageRef::parse("https://a/b.jpg"), ImageRef::Url("https://a/b.jpg".into()));
        assert_eq!(ImageRef::parse("imgs/b.jpg"), ImageRef::Path("imgs/b.jpg".into()));
        assert_eq!(mime_for(Path::new("x.PNG")), "image/png");
        assert_eq!(mime_for(Path::new("x")), "image/jpeg");
    }

    #[test]
    fn backoff_doubles_with_jitter() {
        let g = Gateway::with_api_key(GatewayConfig { backoff_initial_ms: 100, ..cfg() }, None).unwrap();
        for retry in 0..4 {
            let d = g.backoff(retry).as_secs_f64() * 1000.0;
            let base = 100.0 * 2f64.powi(retry as i32);
            assert!(d >= base && d < base * 1.5, "{d} vs {base}");
        }
    }

    #[test]
    fn missing_image_is_reported() {
        let g = Gateway::with_api_key(cfg(), None).unwrap();
        let err = g
            .caption_image("i", &ImageRef::Path("/nonexistent/x.jpg".into()), &CaptionerPrompt::default())
            .unwrap_err();
        assert!(matches!(err, GatewayError::Image { .. }));
        assert_eq!(g.requests_sent(), 0);
    }
}
