//! Chat-completions request and response bodies.

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Message {
    pub role: String,
    /// A plain string, or an array of typed parts for multimodal input.
    pub content: Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model: String,
    pub messages: Vec<Message>,
    pub temperature: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_tokens: Option<u32>,
}

impl ChatRequest {
    pub fn text(model: &str, system: &str, user: &str, temperature: f64, max_tokens: u32) -> Self {
        Self {
            model: model.to_string(),
            messages: vec![
                Message {
                    role: "system".into(),
                    content: Value::String(system.to_string()),
                },
                Message {
                    role: "user".into(),
                    content: Value::String(user.to_string()),
                },
            ],
            temperature,
            max_tokens: Some(max_tokens),
        }
    }

    /// One user turn carrying the prompt text and an image URL (which may be
    /// a `data:` URL).
    pub fn vision(model: &str, prompt: &str, image_url: &str, temperature: f64, max_tokens: u32) -> Self {
        Self {
            model: model.to_string(),
            messages: vec![Message {
                role: "user".into(),
                content: json!([
                    {"type": "text", "text": prompt},
                    {"type": "image_url", "image_url": {"url": image_url}},
                ]),
            }],
            temperature,
            max_tokens: Some(max_tokens),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
pub struct ChatResponse {
    pub choices: Vec<Choice>,
}

#[derive(Debug, Clone, Deserialize)]
pub struct Choice {
    pub message: ResponseMessage,
}

#[derive(Debug, Clone, Deserialize)]
pub struct ResponseMessage {
    #[serde(default)]
    pub content: Option<String>,
}

impl ChatResponse {
    /// `choices[0].message.content`
    pub fn content(&self) -> Option<&str> {
        self.choices.first()?.message.content.as_deref()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_request_shape() {
        let req = ChatRequest::text("text-model", "sys", "usr", 0.0, 1024);
        let v = serde_json::to_value(&req).unwrap();
        assert_eq!(
            v,
            json!({
                "model": "text-model",
                "messages": [{"role": "system", "content": "sys"}, {"role": "user", "content": "usr"}],
                "temperature": 0.0,
                "max_tokens": 1024
            })
        );
    }

    #[test]
    fn vision_request_shape() {
        let req = ChatRequest::vision("vision-model", "describe", "data:image/png;base64,AA==", 0.0, 16);
        let v = serde_json::to_value(&req).unwrap();
        assert_eq!(v["messages"][0]["content"][1]["image_url"]["url"], "data:image/png;base64,AA==");
        assert_eq!(v["messages"][0]["content"][0]["text"], "describe");
    }

    #[test]
    fn response_content() {
        let r: ChatResponse =
            serde_json::from_str(r#"{"id":"x","choices":[{"index":0,"message":{"role":"assistant","content":"hi"}}]}"#)
                .unwrap();
        assert_eq!(r.content(), Some("hi"));
        let r: ChatResponse = serde_json::from_str(r#"{"choices":[]}"#).unwrap();
        assert_eq!(r.content(), None);
    }
}
