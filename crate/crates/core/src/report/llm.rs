//! Language-model providers.
//!
//! HTTP contract (`HttpLlm`): `POST <endpoint>` with JSON
//! `{"model": "...", "messages": [{"role": "user", "content": "<prompt>"}]}`,
//! answered by `{"text": "<completion>"}`. The API key, when configured, is
//! sent as `Authorization: Bearer <key>`.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;
use std::sync::RwLock;

use serde::{Deserialize, Serialize};

use crate::hashing::sha256_hex;
use crate::provider::{check_status, transport, ProviderError, RetryPolicy};

pub trait LlmProvider: Send + Sync {
    fn name(&self) -> &str;
    fn complete(&self, prompt: &str) -> Result<String, ProviderError>;
}

impl<P: LlmProvider + ?Sized> LlmProvider for &P {
    fn name(&self) -> &str {
        (**self).name()
    }
    fn complete(&self, prompt: &str) -> Result<String, ProviderError> {
        (**self).complete(prompt)
    }
}

impl<P: LlmProvider + ?Sized> LlmProvider for Box<P> {
    fn name(&self) -> &str {
        (**self).name()
    }
    fn complete(&self, prompt: &str) -> Result<String, ProviderError> {
        (**self).complete(prompt)
    }
}

impl<P: LlmProvider + ?Sized> LlmProvider for std::sync::Arc<P> {
    fn name(&self) -> &str {
        (**self).name()
    }
    fn complete(&self, prompt: &str) -> Result<String, ProviderError> {
        (**self).complete(prompt)
    }
}

/// Key under which a prompt's response is recorded.
pub fn prompt_hash(prompt: &str) -> String {
    sha256_hex(prompt.as_bytes())
}

/// Recorded-response provider. The fixture format is a JSON object mapping
/// `sha256(prompt)` (lowercase hex) to the response text.
#[derive(Debug, Default)]
pub struct MockLlm {
    responses: RwLock<HashMap<String, String>>,
}

impl MockLlm {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_json(json: &str) -> Result<Self, ProviderError> {
        let map: HashMap<String, String> = serde_json::from_str(json)
            .map_err(|e| ProviderError::BadResponse(format!("mock fixture: {e}")))?;
        Ok(Self {
            responses: RwLock::new(map),
        })
    }

    pub fn from_file(path: &Path) -> Result<Self, ProviderError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ProviderError::Other(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// Record `response` for `prompt`.
    pub fn insert(&self, prompt: &str, response: impl Into<String>) {
        self.insert_hash(prompt_hash(prompt), response);
    }

    pub fn insert_hash(&self, hash: String, response: impl Into<String>) {
        self.responses
            .write()
            .unwrap_or_else(|e| e.into_inner())
            .insert(hash, response.into());
    }

    pub fn len(&self) -> usize {
        self.responses.read().unwrap_or_else(|e| e.into_inner()).len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Canonical fixture JSON (keys sorted).
    pub fn to_json(&self) -> String {
        let map = self.responses.read().unwrap_or_else(|e| e.into_inner());
        let sorted: BTreeMap<&String, &String> = map.iter().collect();
        serde_json::to_string_pretty(&sorted).expect("string map serializes")
    }
}

impl LlmProvider for MockLlm {
    fn name(&self) -> &str {
        "mock"
    }

    fn complete(&self, prompt: &str) -> Result<String, ProviderError> {
        let hash = prompt_hash(prompt);
        self.responses
            .read()
            .unwrap_or_else(|e| e.into_inner())
            .get(&hash)
            .cloned()
            .ok_or(ProviderError::NotRecorded(hash))
    }
}

#[derive(Debug, Serialize)]
struct ChatMessage<'a> {
    role: &'a str,
    content: &'a str,
}

#[derive(Debug, Serialize)]
struct ChatRequest<'a> {
    model: &'a str,
    messages: Vec<ChatMessage<'a>>,
}

#[derive(Debug, Deserialize)]
struct ChatResponse {
    text: String,
}

/// Remote chat-completion provider.
pub struct HttpLlm {
    endpoint: String,
    model: String,
    api_key: Option<String>,
    policy: RetryPolicy,
    client: reqwest::blocking::Client,
}

impl HttpLlm {
    pub fn new(
        endpoint: impl Into<String>,
        model: impl Into<String>,
        api_key: Option<String>,
        policy: RetryPolicy,
    ) -> Result<Self, ProviderError> {
        Ok(Self {
            endpoint: endpoint.into(),
            model: model.into(),
            api_key,
            client: policy.client()?,
            policy,
        })
    }

    fn attempt(&self, prompt: &str) -> Result<String, ProviderError> {
        let body = ChatRequest {
            model: &self.model,
            messages: vec![ChatMessage {
                role: "user",
                content: prompt,
            }],
        };
        let mut req = self.client.post(&self.endpoint).json(&body);
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let resp = check_status(req.send().map_err(transport)?)?;
        let parsed: ChatResponse = resp
            .json()
            .map_err(|e| ProviderError::BadResponse(e.to_string()))?;
        Ok(parsed.text)
    }
}

impl LlmProvider for HttpLlm {
    fn name(&self) -> &str {
        "http"
    }

    fn complete(&self, prompt: &str) -> Result<String, ProviderError> {
        self.policy.run(|| self.attempt(prompt))
    }
}
