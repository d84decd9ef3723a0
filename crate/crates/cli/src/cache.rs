//! Content-addressed artifact cache and caching provider wrappers.
//!
//! Entries live at `<root>/<namespace>/<key>.<ext>` where `key` is a SHA-256
//! over everything that determines the content. Writes go through a temporary
//! file and a rename so a crashed run never leaves a torn entry.

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::Instant;

use radvid_core::hashing::sha256_parts;
use radvid_core::media::{
    split_frames, AvatarTrack, MediaError, NarrationClip, NarrationProvider, Pcm,
};
use radvid_core::provider::ProviderError;
use radvid_core::report::LlmProvider;
use radvid_core::segmentation::{MaskData, SegError, SegmentationProvider};
use radvid_core::telemetry::{CallLog, CallRecord};
use radvid_core::volume::CtVolume;
use serde::{Deserialize, Serialize};

static TMP_COUNTER: AtomicU64 = AtomicU64::new(0);

#[derive(Debug, Clone)]
pub struct Cache {
    root: PathBuf,
}

impl Cache {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn path(&self, ns: &str, key: &str, ext: &str) -> PathBuf {
        self.root.join(ns).join(format!("{key}.{ext}"))
    }

    pub fn get(&self, ns: &str, key: &str, ext: &str) -> Option<Vec<u8>> {
        std::fs::read(self.path(ns, key, ext)).ok()
    }

    pub fn contains(&self, ns: &str, key: &str, ext: &str) -> bool {
        self.path(ns, key, ext).is_file()
    }

    pub fn put(&self, ns: &str, key: &str, ext: &str, bytes: &[u8]) -> std::io::Result<PathBuf> {
        let path = self.path(ns, key, ext);
        let dir = path.parent().expect("cache path has a parent");
        std::fs::create_dir_all(dir)?;
        let tmp = dir.join(format!(
            ".{key}.{}.{}.tmp",
            std::process::id(),
            TMP_COUNTER.fetch_add(1, Ordering::Relaxed)
        ));
        std::fs::write(&tmp, bytes)?;
        std::fs::rename(&tmp, &path).inspect_err(|_| {
            let _ = std::fs::remove_file(&tmp);
        })?;
        Ok(path)
    }
}

fn record(log: &CallLog, provider: &str, backend: &str, key: &str, t0: Instant, hit: bool, ok: bool) {
    log.push(CallRecord {
        provider: provider.to_string(),
        backend: backend.to_string(),
        request_hash: key.to_string(),
        latency_ms: t0.elapsed().as_millis() as u64,
        cache_hit: hit,
        ok,
    });
}

/// LLM wrapper answering from the cache before asking `inner`.
///
/// `backend_id` must change whenever the same prompt could get a different
/// answer (endpoint, model, fixture contents).
pub struct CachedLlm {
    pub inner: Option<Box<dyn LlmProvider>>,
    pub backend_id: String,
    pub cache: Cache,
    pub log: CallLog,
}

impl CachedLlm {
    pub fn key(&self, prompt: &str) -> String {
        sha256_parts([self.backend_id.as_bytes(), prompt.as_bytes()])
    }
}

impl LlmProvider for CachedLlm {
    fn name(&self) -> &str {
        self.inner.as_ref().map_or("cache", |p| p.name())
    }

    fn complete(&self, prompt: &str) -> Result<String, ProviderError> {
        let t0 = Instant::now();
        let key = self.key(prompt);
        let backend = self.name().to_string();
        if let Some(bytes) = self.cache.get("llm", &key, "txt") {
            if let Ok(text) = String::from_utf8(bytes) {
                record(&self.log, "llm", &backend, &key, t0, true, true);
                return Ok(text);
            }
        }
        let Some(inner) = &self.inner else {
            record(&self.log, "llm", &backend, &key, t0, false, false);
            return Err(ProviderError::NotRecorded(key));
        };
        let r = inner.complete(prompt);
        if let Ok(text) = &r {
            if let Err(e) = self.cache.put("llm", &key, "txt", text.as_bytes()) {
                log::warn!("could not cache LLM answer: {e}");
            }
        }
        record(&self.log, "llm", &backend, &key, t0, false, r.is_ok());
        r
    }
}

/// Segmentation wrapper keyed by backend, volume content hash and organ.
/// Empty-mask answers are cached too, as all-zero masks.
pub struct CachedSegmentation {
    pub inner: Option<Box<dyn SegmentationProvider>>,
    pub backend_id: String,
    pub cache: Cache,
    pub log: CallLog,
}

impl CachedSegmentation {
    pub fn key(&self, vol: &CtVolume, organ: &str) -> String {
        sha256_parts([
            self.backend_id.as_bytes(),
            vol.content_hash().as_bytes(),
            organ.as_bytes(),
        ])
    }
}

impl SegmentationProvider for CachedSegmentation {
    fn name(&self) -> &str {
        self.inner.as_ref().map_or("cache", |p| p.name())
    }

    fn segment(&self, vol: &CtVolume, organ: &str) -> Result<MaskData, SegError> {
        let t0 = Instant::now();
        let key = self.key(vol, organ);
        let backend = self.name().to_string();
        if let Some(bytes) = self.cache.get("mask", &key, "nii.gz") {
            if let Ok(m) = MaskData::from_nifti_bytes(&bytes) {
                record(&self.log, "segmentation", &backend, &key, t0, true, true);
                return Ok(m);
            }
        }
        let Some(inner) = &self.inner else {
            record(&self.log, "segmentation", &backend, &key, t0, false, false);
            return Err(SegError::ProviderFailure(ProviderError::NotRecorded(key)));
        };
        let r = match inner.segment(vol, organ) {
            Err(SegError::EmptyMask { .. }) => Ok(MaskData {
                grid: *vol.grid(),
                voxels: vec![0; vol.grid().len()],
            }),
            other => other,
        };
        if let Ok(m) = &r {
            if let Err(e) = self.cache.put("mask", &key, "nii.gz", &m.to_nifti_bytes(true)) {
                log::warn!("could not cache mask: {e}");
            }
        }
        record(&self.log, "segmentation", &backend, &key, t0, false, r.is_ok());
        r
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct ClipMeta {
    duration: f64,
    fps: Option<f64>,
    frame_size: Option<[usize; 2]>,
    frames: usize,
}

/// Narration wrapper for remote services: audio and avatar frames are stored
/// as `<key>.wav` and `<key>.rgb` with a `<key>.json` written last.
pub struct CachedNarrator {
    pub inner: Box<dyn NarrationProvider>,
    pub backend_id: String,
    pub cache: Cache,
    pub log: CallLog,
}

impl CachedNarrator {
    pub fn key(&self, text: &str) -> String {
        sha256_parts([self.backend_id.as_bytes(), text.as_bytes()])
    }

    fn load(&self, key: &str, text: &str) -> Option<NarrationClip> {
        let meta: ClipMeta = serde_json::from_slice(&self.cache.get("narration", key, "json")?).ok()?;
        let audio = Pcm::from_wav_bytes(&self.cache.get("narration", key, "wav")?).ok()?;
        let avatar = match (meta.fps, meta.frame_size) {
            (Some(fps), Some([w, h])) => {
                let raw = self.cache.get("narration", key, "rgb")?;
                let frames = split_frames(&raw, w, h).ok()?;
                if frames.len() != meta.frames {
                    return None;
                }
                Some(AvatarTrack { fps, frames })
            }
            _ => None,
        };
        Some(NarrationClip {
            audio,
            duration: meta.duration,
            avatar,
            transcript: text.to_string(),
        })
    }

    fn store(&self, key: &str, clip: &NarrationClip) -> Result<(), MediaError> {
        self.cache.put("narration", key, "wav", &clip.audio.to_wav_bytes()?)?;
        let mut meta = ClipMeta {
            duration: clip.duration,
            fps: None,
            frame_size: None,
            frames: 0,
        };
        if let Some(track) = &clip.avatar {
            if let Some(first) = track.frames.first() {
                let raw: Vec<u8> = track.frames.iter().flat_map(|f| f.data.iter().copied()).collect();
                self.cache.put("narration", key, "rgb", &raw)?;
                meta.fps = Some(track.fps);
                meta.frame_size = Some([first.width, first.height]);
                meta.frames = track.frames.len();
            }
        }
        let json = serde_json::to_vec(&meta).map_err(|e| MediaError::InvalidInput(e.to_string()))?;
        self.cache.put("narration", key, "json", &json)?;
        Ok(())
    }
}

impl NarrationProvider for CachedNarrator {
    fn name(&self) -> &str {
        self.inner.name()
    }

    fn narrate(&self, text: &str) -> Result<NarrationClip, MediaError> {
        let t0 = Instant::now();
        let key = self.key(text);
        let backend = self.name().to_string();
        if let Some(clip) = self.load(&key, text) {
            record(&self.log, "narration", &backend, &key, t0, true, true);
            return Ok(clip);
        }
        let r = self.inner.narrate(text);
        if let Ok(clip) = &r {
            if let Err(e) = self.store(&key, clip) {
                log::warn!("could not cache narration: {e}");
            }
        }
        record(&self.log, "narration", &backend, &key, t0, false, r.is_ok());
        r
    }
}

/// Narration wrapper that only logs calls.
pub struct LoggedNarrator {
    pub inner: Arc<dyn NarrationProvider>,
    pub log: CallLog,
}

impl NarrationProvider for LoggedNarrator {
    fn name(&self) -> &str {
        self.inner.name()
    }

    fn narrate(&self, text: &str) -> Result<NarrationClip, MediaError> {
        let t0 = Instant::now();
        let r = self.inner.narrate(text);
        let key = sha256_parts([self.name().as_bytes(), text.as_bytes()]);
        record(&self.log, "narration", self.name(), &key, t0, false, r.is_ok());
        r
    }
}
