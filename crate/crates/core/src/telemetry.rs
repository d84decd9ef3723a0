//! Provider call records.
//!
//! Every provider wrapper in the pipeline appends a [`CallRecord`] so a run log
//! can show which calls were served from cache and replay them later.

use serde::{Deserialize, Serialize};
use std::sync::{Arc, Mutex};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CallRecord {
    /// `llm`, `segmentation` or `narration`.
    pub provider: String,
    /// Backend name, e.g. `mock`, `http`, `phantom`.
    pub backend: String,
    /// SHA-256 of the request key (prompt text, volume hash + organ, narration text).
    pub request_hash: String,
    pub latency_ms: u64,
    pub cache_hit: bool,
    pub ok: bool,
}

/// Shared, append-only list of provider calls.
#[derive(Debug, Clone, Default)]
pub struct CallLog {
    inner: Arc<Mutex<Vec<CallRecord>>>,
}

impl CallLog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&self, record: CallRecord) {
        self.inner
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .push(record);
    }

    pub fn snapshot(&self) -> Vec<CallRecord> {
        self.inner.lock().unwrap_or_else(|e| e.into_inner()).clone()
    }

    pub fn len(&self) -> usize {
        self.inner.lock().unwrap_or_else(|e| e.into_inner()).len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}
