//! Chat-model clients: a live OpenAI-compatible backend, a record/replay
//! wrapper, and the interface the stages call.

use serde::Deserialize;
use std::time::Duration;

use crate::record::{http_post_json, Recorder};

pub const DEFAULT_MAX_TOKENS: u32 = 5000;
pub const API_KEY_ENV: &str = "EYEQ_API_KEY";
pub const API_BASE_ENV: &str = "EYEQ_API_BASE";
pub const MODEL_ENV: &str = "EYEQ_MODEL";
pub const DEFAULT_API_BASE: &str = "https://generativelanguage.googleapis.com/v1beta/openai";
pub const DEFAULT_MODEL: &str = "gemini-2.5-flash";

#[derive(Debug, Clone, thiserror::Error, PartialEq, Eq)]
pub enum ClientError {
    #[error("model transport: {message}")]
    Transport { message: String, retriable: bool },
    #[error("no recorded response for request {key_hash} and no live backend")]
    NotRecorded { key_hash: String },
    #[error("client configuration: {0}")]
    Config(String),
}

impl ClientError {
    pub fn is_retriable(&self) -> bool {
        matches!(self, ClientError::Transport { retriable: true, .. })
    }
}

/// `(system prompt, user payload, max output tokens) -> text`.
pub trait ModelClient: Send + Sync {
    fn name(&self) -> &str;
    fn complete(&self, system: &str, user: &str, max_tokens: u32) -> Result<String, ClientError>;
}

impl<C: ModelClient + ?Sized> ModelClient for Box<C> {
    fn name(&self) -> &str {
        (**self).name()
    }
    fn complete(&self, system: &str, user: &str, max_tokens: u32) -> Result<String, ClientError> {
        (**self).complete(system, user, max_tokens)
    }
}

/// OpenAI-compatible `/chat/completions` backend at temperature 0.
pub struct LiveClient {
    pub api_base: String,
    pub model: String,
    api_key: String,
    pub max_attempts: u32,
}

impl LiveClient {
    pub fn from_env() -> Result<LiveClient, ClientError> {
        let api_key = std::env::var(API_KEY_ENV)
            .ok()
            .filter(|k| !k.is_empty())
            .ok_or_else(|| ClientError::Config(format!("{API_KEY_ENV} is not set")))?;
        Ok(LiveClient {
            api_base: std::env::var(API_BASE_ENV).unwrap_or_else(|_| DEFAULT_API_BASE.into()),
            model: std::env::var(MODEL_ENV).unwrap_or_else(|_| DEFAULT_MODEL.into()),
            api_key,
            max_attempts: 3,
        })
    }
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<Choice>,
}
#[derive(Deserialize)]
struct Choice {
    message: Message,
}
#[derive(Deserialize)]
struct Message {
    content: Option<String>,
}

impl ModelClient for LiveClient {
    fn name(&self) -> &str {
        &self.model
    }

    fn complete(&self, system: &str, user: &str, max_tokens: u32) -> Result<String, ClientError> {
        let url = format!("{}/chat/completions", self.api_base.trim_end_matches('/'));
        let body = serde_json::json!({
            "model": self.model,
            "temperature": 0,
            "max_tokens": max_tokens,
            "response_format": {"type": "json_object"},
            "messages": [
                {"role": "system", "content": system},
                {"role": "user", "content": user},
            ],
        });
        let headers = [("Authorization", format!("Bearer {}", self.api_key))];
        let mut attempt = 0;
        loop {
            attempt += 1;
            match http_post_json(&url, &headers, &body) {
                Ok(text) => {
                    let r: ChatResponse = serde_json::from_str(&text).map_err(|e| ClientError::Transport {
                        message: format!("unexpected response shape: {e}"),
                        retriable: false,
                    })?;
                    return Ok(r.choices.into_iter().next().and_then(|c| c.message.content).unwrap_or_default());
                }
                Err(e) if e.is_retriable() && attempt < self.max_attempts => {
                    log::warn!("{e}; retrying ({attempt}/{})", self.max_attempts);
                    std::thread::sleep(Duration::from_millis(500 << attempt));
                }
                Err(e) => {
                    return Err(ClientError::Transport { retriable: e.is_retriable(), message: e.to_string() });
                }
            }
        }
    }
}

/// Replays recorded responses; on a miss, asks `inner` and records the
/// answer. Without `inner` a miss is an error, which keeps CI offline.
pub struct RecordingClient<C> {
    pub inner: Option<C>,
    pub recorder: Recorder,
    /// Part of the key so recordings of different models never mix.
    pub model: String,
}

impl<C: ModelClient> RecordingClient<C> {
    fn key(&self, system: &str, user: &str, max_tokens: u32) -> String {
        serde_json::json!({"model": self.model, "system": system, "user": user, "max_tokens": max_tokens}).to_string()
    }
}

impl<C: ModelClient> ModelClient for RecordingClient<C> {
    fn name(&self) -> &str {
        &self.model
    }

    fn complete(&self, system: &str, user: &str, max_tokens: u32) -> Result<String, ClientError> {
        let key = self.key(system, user, max_tokens);
        let io = |e: std::io::Error| ClientError::Config(format!("recording store: {e}"));
        if let Some(hit) = self.recorder.lookup(&key).map_err(io)? {
            return Ok(hit);
        }
        let Some(inner) = &self.inner else {
            return Err(ClientError::NotRecorded { key_hash: Recorder::key_hash(&key) });
        };
        let out = inner.complete(system, user, max_tokens)?;
        self.recorder.store(&key, &out).map_err(io)?;
        Ok(out)
    }
}

/// Pulls the outermost `{...}` out of a reply, tolerating code fences and
/// chatter around it.
pub fn extract_json(reply: &str) -> Option<&str> {
    let start = reply.find('{')?;
    let end = reply.rfind('}')?;
    (end > start).then(|| &reply[start..=end])
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Echo;
    impl ModelClient for Echo {
        fn name(&self) -> &str {
            "echo"
        }
        fn complete(&self, _: &str, user: &str, _: u32) -> Result<String, ClientError> {
            Ok(user.to_uppercase())
        }
    }

    #[test]
    fn recording_then_offline_replay() {
        let d = tempfile::tempdir().unwrap();
        let live = RecordingClient { inner: Some(Echo), recorder: Recorder::new(d.path()), model: "m".into() };
        assert_eq!(live.complete("s", "hi", 10).unwrap(), "HI");
        let offline: RecordingClient<Echo> = RecordingClient { inner: None, recorder: Recorder::new(d.path()), model: "m".into() };
        assert_eq!(offline.complete("s", "hi", 10).unwrap(), "HI");
        assert!(matches!(offline.complete("s", "other", 10), Err(ClientError::NotRecorded { .. })));
    }

    #[test]
    fn json_extraction() {
        assert_eq!(extract_json("```json\n{\"a\": {}}\n```"), Some("{\"a\": {}}"));
        assert_eq!(extract_json("nothing"), None);
    }
}
