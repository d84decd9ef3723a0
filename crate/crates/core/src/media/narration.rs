use std::sync::Arc;

use base64::Engine;
use serde::{Deserialize, Serialize};

use super::audio::{Pcm, DEFAULT_SAMPLE_RATE};
use super::image::RgbImage;
use super::MediaError;
use crate::provider::{check_status, transport, ProviderError, RetryPolicy};

pub const DEFAULT_WPM: f64 = 150.0;
pub const MIN_NARRATION_SECONDS: f64 = 1.0;

/// Spoken length of `text` at `wpm` words per minute, at least one second.
pub fn estimate_duration(text: &str, wpm: f64) -> f64 {
    let words = text.split_whitespace().count() as f64;
    (words / wpm * 60.0).max(MIN_NARRATION_SECONDS)
}

/// Presenter video running alongside a narration clip.
#[derive(Debug, Clone, PartialEq)]
pub struct AvatarTrack {
    pub fps: f64,
    pub frames: Vec<Arc<RgbImage>>,
}

impl AvatarTrack {
    /// Frame on screen at `t` seconds; the last frame holds once the track ends.
    pub fn frame_at(&self, t: f64) -> Option<&RgbImage> {
        let last = self.frames.len().checked_sub(1)?;
        let i = (t.max(0.0) * self.fps).floor() as usize;
        Some(&self.frames[i.min(last)])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NarrationClip {
    pub audio: Pcm,
    pub duration: f64,
    pub avatar: Option<AvatarTrack>,
    pub transcript: String,
}

impl NarrationClip {
    pub fn validate(&self) -> Result<(), MediaError> {
        let bad = |m: String| Err(MediaError::MalformedProviderOutput(m));
        let rate = self.audio.sample_rate;
        if rate == 0 {
            return bad("audio sample rate is zero".into());
        }
        if !(self.duration.is_finite() && self.duration > 0.0) {
            return bad(format!("clip duration {} is not positive", self.duration));
        }
        let expected = self.duration * rate as f64;
        if (self.audio.samples.len() as f64 - expected).abs() > 1.0 {
            return bad(format!(
                "duration {} s disagrees with {} samples at {rate} Hz",
                self.duration,
                self.audio.samples.len()
            ));
        }
        if let Some(av) = &self.avatar {
            if !(av.fps.is_finite() && av.fps > 0.0) {
                return bad(format!("avatar fps {} is not positive", av.fps));
            }
            let want = (self.duration * av.fps).round();
            if (av.frames.len() as f64 - want).abs() > 1.0 {
                return bad(format!(
                    "{} avatar frames for {} s at {} fps (expected {want})",
                    av.frames.len(),
                    self.duration,
                    av.fps
                ));
            }
            if let Some(f) = av.frames.first() {
                if av
                    .frames
                    .iter()
                    .any(|g| g.width != f.width || g.height != f.height)
                {
                    return bad("avatar frames differ in size".into());
                }
            }
        }
        Ok(())
    }
}

pub trait NarrationProvider: Send + Sync {
    fn name(&self) -> &str;
    fn narrate(&self, text: &str) -> Result<NarrationClip, MediaError>;
}

/// Narrate `text` and check the clip the provider returns.
pub fn narrate(text: &str, provider: &dyn NarrationProvider) -> Result<NarrationClip, MediaError> {
    if text.trim().is_empty() {
        return Err(MediaError::EmptyText);
    }
    let clip = provider.narrate(text)?;
    clip.validate()?;
    if clip.transcript != text {
        return Err(MediaError::MalformedProviderOutput(format!(
            "{} returned a transcript for different text",
            provider.name()
        )));
    }
    Ok(clip)
}

/// Narrate every text, at most `concurrency` provider calls at a time.
/// Results are in input order.
pub fn narrate_all(
    texts: &[String],
    provider: &dyn NarrationProvider,
    concurrency: usize,
) -> Result<Vec<NarrationClip>, MediaError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(concurrency.max(1))
        .build()
        .map_err(|e| MediaError::InvalidInput(format!("thread pool: {e}")))?;
    pool.install(|| {
        use rayon::prelude::*;
        texts.par_iter().map(|t| narrate(t, provider)).collect()
    })
}

/// Silent narration paced by word count, with a static presenter card.
#[derive(Debug, Clone)]
pub struct OfflineNarrator {
    pub wpm: f64,
    pub sample_rate: u32,
    pub fps: f64,
    card: Arc<RgbImage>,
}

impl OfflineNarrator {
    pub fn new(wpm: f64, sample_rate: u32, fps: f64, card_size: usize) -> Self {
        Self {
            wpm,
            sample_rate,
            fps,
            card: Arc::new(presenter_card(card_size.max(1), card_size.max(1))),
        }
    }

    pub fn card(&self) -> &RgbImage {
        &self.card
    }
}

impl Default for OfflineNarrator {
    fn default() -> Self {
        Self::new(DEFAULT_WPM, DEFAULT_SAMPLE_RATE, 10.0, 158)
    }
}

impl NarrationProvider for OfflineNarrator {
    fn name(&self) -> &str {
        "offline"
    }

    fn narrate(&self, text: &str) -> Result<NarrationClip, MediaError> {
        if !(self.wpm > 0.0) {
            return Err(MediaError::InvalidInput(format!("wpm {} is not positive", self.wpm)));
        }
        let audio = Pcm::silence(estimate_duration(text, self.wpm), self.sample_rate);
        let duration = audio.duration();
        let n = (duration * self.fps).round() as usize;
        Ok(NarrationClip {
            audio,
            duration,
            avatar: Some(AvatarTrack {
                fps: self.fps,
                frames: vec![Arc::clone(&self.card); n],
            }),
            transcript: text.to_string(),
        })
    }
}

/// Head-and-shoulders silhouette on a plain backdrop.
pub fn presenter_card(w: usize, h: usize) -> RgbImage {
    let mut img = RgbImage::new(w, h, [38, 52, 74]);
    let (w, h) = (w as i64, h as i64);
    let cx = w / 2;
    // Shoulders: upper half of an ellipse resting on the bottom edge.
    let (sy, sa, sb) = (h, 2 * w / 5, 3 * h / 10);
    // Head: circle above the shoulders.
    let (hy, hr) = (h * 2 / 5, (w.min(h) * 17 / 100).max(1));
    for y in 0..h {
        for x in 0..w {
            let dx = x - cx;
            let (dys, dyh) = (y - sy, y - hy);
            let in_shoulders =
                sa > 0 && sb > 0 && dx * dx * sb * sb + dys * dys * sa * sa <= sa * sa * sb * sb;
            if dx * dx + dyh * dyh <= hr * hr {
                img.put(x as usize, y as usize, [214, 188, 162]);
            } else if in_shoulders {
                img.put(x as usize, y as usize, [72, 112, 164]);
            }
        }
    }
    img
}

#[derive(Debug, Serialize)]
struct TtsRequest<'a> {
    text: &'a str,
    voice: &'a str,
}

/// Response body of the remote narration service.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct TtsResponse {
    /// Base64 of a PCM WAV file.
    pub audio_b64: String,
    pub fps: f64,
    /// Raw RGB24 frames, concatenated, `frame_size` pixels each.
    #[serde(default)]
    pub frames_url: Option<String>,
    /// `[width, height]`; required with `frames_url`.
    #[serde(default)]
    pub frame_size: Option<[usize; 2]>,
}

/// Remote text-to-speech / avatar service.
///
/// `POST <endpoint>` with JSON `{text, voice}`; the reply is [`TtsResponse`].
/// A relative `frames_url` resolves against the endpoint.
pub struct HttpNarrator {
    endpoint: String,
    voice: String,
    sample_rate: u32,
    policy: RetryPolicy,
    client: reqwest::blocking::Client,
}

impl HttpNarrator {
    pub fn new(
        endpoint: impl Into<String>,
        voice: impl Into<String>,
        sample_rate: u32,
        policy: RetryPolicy,
    ) -> Result<Self, ProviderError> {
        Ok(Self {
            endpoint: endpoint.into(),
            voice: voice.into(),
            sample_rate,
            client: policy.client()?,
            policy,
        })
    }

    fn request(&self, text: &str) -> Result<TtsResponse, ProviderError> {
        let resp = self
            .client
            .post(&self.endpoint)
            .json(&TtsRequest {
                text,
                voice: &self.voice,
            })
            .send()
            .map_err(transport)?;
        check_status(resp)?
            .json::<TtsResponse>()
            .map_err(|e| ProviderError::BadResponse(e.to_string()))
    }

    fn fetch_frames(&self, url: &str) -> Result<Vec<u8>, ProviderError> {
        let base = reqwest::Url::parse(&self.endpoint)
            .map_err(|e| ProviderError::Other(format!("endpoint URL: {e}")))?;
        let url = base
            .join(url)
            .map_err(|e| ProviderError::BadResponse(format!("frames_url: {e}")))?;
        let resp = self.client.get(url).send().map_err(transport)?;
        Ok(check_status(resp)?.bytes().map_err(transport)?.to_vec())
    }
}

impl NarrationProvider for HttpNarrator {
    fn name(&self) -> &str {
        "http"
    }

    fn narrate(&self, text: &str) -> Result<NarrationClip, MediaError> {
        let resp = self.policy.run(|| self.request(text))?;
        let wav = base64::engine::general_purpose::STANDARD
            .decode(resp.audio_b64.trim())
            .map_err(|e| MediaError::MalformedProviderOutput(format!("audio_b64: {e}")))?;
        let audio = Pcm::from_wav_bytes(&wav)?.resampled(self.sample_rate);
        let duration = audio.duration();
        let avatar = match (&resp.frames_url, resp.frame_size) {
            (None, _) => None,
            (Some(_), None) => {
                return Err(MediaError::MalformedProviderOutput(
                    "frames_url without frame_size".into(),
                ))
            }
            (Some(url), Some([w, h])) => {
                let raw = self.policy.run(|| self.fetch_frames(url))?;
                Some(AvatarTrack {
                    fps: resp.fps,
                    frames: split_frames(&raw, w, h)?,
                })
            }
        };
        Ok(NarrationClip {
            audio,
            duration,
            avatar,
            transcript: text.to_string(),
        })
    }
}

/// Cut a raw RGB24 stream into `w` x `h` frames.
pub fn split_frames(raw: &[u8], w: usize, h: usize) -> Result<Vec<Arc<RgbImage>>, MediaError> {
    let size = w * h * 3;
    if size == 0 || raw.len() % size != 0 {
        return Err(MediaError::MalformedProviderOutput(format!(
            "{} bytes of frames is not a multiple of {w}x{h} RGB",
            raw.len()
        )));
    }
    Ok(raw
        .chunks_exact(size)
        .map(|c| Arc::new(RgbImage::from_raw(w, h, c.to_vec()).expect("chunk size")))
        .collect())
}

/// Uses `primary`, switching to `fallback` on provider failures when allowed.
pub struct FallbackNarrator {
    pub primary: Box<dyn NarrationProvider>,
    pub fallback: Box<dyn NarrationProvider>,
    pub allow_fallback: bool,
}

impl NarrationProvider for FallbackNarrator {
    fn name(&self) -> &str {
        self.primary.name()
    }

    fn narrate(&self, text: &str) -> Result<NarrationClip, MediaError> {
        let result = self.primary.narrate(text).and_then(|c| {
            c.validate()?;
            Ok(c)
        });
        match result {
            Err(e @ (MediaError::ProviderFailure(_) | MediaError::MalformedProviderOutput(_)))
                if self.allow_fallback =>
            {
                log::warn!(
                    "{} narration failed ({e}); using {}",
                    self.primary.name(),
                    self.fallback.name()
                );
                self.fallback.narrate(text)
            }
            other => other,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn words(n: usize) -> String {
        vec!["word"; n].join(" ")
    }

    #[test]
    fn duration_examples() {
        assert_eq!(estimate_duration(&words(25), 150.0), 10.0);
        assert_eq!(estimate_duration("", 150.0), 1.0);
        assert_eq!(estimate_duration(&words(150), 150.0), 60.0);
    }

    #[test]
    fn offline_clip() {
        let n = OfflineNarrator::default();
        let clip = narrate(&words(25), &n).unwrap();
        assert_eq!(clip.duration, 10.0);
        assert_eq!(clip.audio.samples.len(), 220_500);
        assert!(clip.audio.samples.iter().all(|&s| s == 0));
        let av = clip.avatar.as_ref().unwrap();
        assert_eq!(av.frames.len(), 100);
        assert!(av.frames.iter().all(|f| **f == *n.card()));
        assert_eq!(clip, narrate(&words(25), &n).unwrap());
    }

    #[test]
    fn empty_text_rejected() {
        assert!(matches!(
            narrate("  ", &OfflineNarrator::default()),
            Err(MediaError::EmptyText)
        ));
    }

    #[test]
    fn avatar_frame_count_checked() {
        let card = Arc::new(RgbImage::new(2, 2, [0; 3]));
        let mut clip = NarrationClip {
            audio: Pcm::silence(3.0, 22050),
            duration: 3.0,
            avatar: Some(AvatarTrack {
                fps: 30.0,
                frames: vec![card.clone(); 90],
            }),
            transcript: "x".into(),
        };
        assert!(clip.validate().is_ok());
        clip.avatar.as_mut().unwrap().frames.truncate(10);
        assert!(matches!(
            clip.validate(),
            Err(MediaError::MalformedProviderOutput(_))
        ));
    }

    #[test]
    fn last_avatar_frame_holds() {
        let frames: Vec<_> = (0..3)
            .map(|i| Arc::new(RgbImage::new(1, 1, [i; 3])))
            .collect();
        let t = AvatarTrack { fps: 10.0, frames };
        assert_eq!(t.frame_at(0.15).unwrap().get(0, 0), [1; 3]);
        assert_eq!(t.frame_at(7.0).unwrap().get(0, 0), [2; 3]);
    }

    #[test]
    fn card_is_deterministic_and_not_flat() {
        let a = presenter_card(64, 64);
        assert_eq!(a, presenter_card(64, 64));
        assert_ne!(a.get(32, 26), a.get(2, 2));
        assert_ne!(a.get(32, 62), a.get(2, 2));
    }
}
