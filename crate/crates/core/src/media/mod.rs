//! Narration, frame compositing and final muxing.

mod audio;
mod compose;
mod image;
mod mux;
mod narration;
mod video;

use thiserror::Error;

use crate::provider::ProviderError;

pub use audio::{samples_for, Pcm, DEFAULT_SAMPLE_RATE};
pub use compose::{
    caption_capacity, caption_lines, compose_frame, slice_highlight, CaptionTrack, FrameInputs,
    FrameLayout, SliceView, panel_content, BACKGROUND, BOX_THICKNESS, CAPTION_SCALE, DEFAULT_AVATAR_FRACTION,
    HIGHLIGHT, MIN_CAPTION_SCALE,
};
pub use image::{draw_text, wrap, Rect, Rgb, RgbImage};
pub use mux::{
    audio_path, encode_png, expand_template, fallback_dir, mux, Manifest, MuxReport, MuxTarget,
    AUDIO_FILE, FRAMES_DIR, MANIFEST_FILE,
};
pub use narration::{
    estimate_duration, narrate, narrate_all, presenter_card, split_frames, AvatarTrack,
    FallbackNarrator, HttpNarrator, NarrationClip, NarrationProvider, OfflineNarrator,
    TtsResponse, DEFAULT_WPM, MIN_NARRATION_SECONDS,
};
pub use video::{FrameSource, StoryboardVideo};

#[derive(Debug, Error)]
pub enum MediaError {
    #[error("narration provider failed: {0}")]
    ProviderFailure(#[from] ProviderError),
    #[error("malformed narration: {0}")]
    MalformedProviderOutput(String),
    #[error("narration text is empty")]
    EmptyText,
    #[error("caption does not fit: {0}")]
    LayoutOverflow(String),
    #[error("invalid frame layout: {0}")]
    InvalidLayout(String),
    #[error("video lasts {video:.3} s but audio {audio:.3} s at {fps} fps")]
    AvSyncMismatch { video: f64, audio: f64, fps: u32 },
    #[error("encoder exited with {status:?}: {stderr}")]
    EncoderFailure { status: Option<i32>, stderr: String },
    #[error("{0}")]
    InvalidInput(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
