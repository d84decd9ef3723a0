//! Timed presentation plan: three segments per finding, in rank order.
//!
//! Phase 1 narrates what the abnormality is, phase 2 where it shows on the
//! patient's scan, and phase 3 compares the scan side by side with the
//! registered normal scan. Narration length sets the pace; the axial scroll
//! through a finding's bounding box is stretched to fit it.

mod window;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::report::Finding;
use crate::segmentation::BoundingBox3D;
use crate::volume::WindowPreset;

pub use window::{select_window, WindowTable};

pub const STORYBOARD_VERSION: u32 = 1;
pub const NOTICE_TEXT: &str =
    "This report does not describe any positive findings, so there is nothing to highlight on your scan.";

#[derive(Debug, Error)]
pub enum StoryboardError {
    #[error("storyboard lasts {total:.2} s, over the {max:.2} s budget ({})", describe(.breakdown))]
    DurationBudgetExceeded {
        total: f64,
        max: f64,
        breakdown: Vec<SegmentTiming>,
    },
    #[error("{duration} s at {fps} fps rounds to zero frames")]
    ZeroFrames { duration: f64, fps: u32 },
    #[error("invalid storyboard config: {0}")]
    InvalidConfig(String),
    #[error("invalid storyboard input: {0}")]
    InvalidInput(String),
    #[error("malformed storyboard: {0}")]
    Malformed(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentTiming {
    pub label: String,
    pub seconds: f64,
}

fn describe(b: &[SegmentTiming]) -> String {
    b.iter()
        .map(|t| format!("{} {:.2}s", t.label, t.seconds))
        .collect::<Vec<_>>()
        .join(", ")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(into = "u8", try_from = "u8")]
pub enum Phase {
    Abnormality = 1,
    InputAppearance = 2,
    NormalComparison = 3,
}

impl Phase {
    pub const ALL: [Phase; 3] = [
        Phase::Abnormality,
        Phase::InputAppearance,
        Phase::NormalComparison,
    ];

    /// The explanation field narrated in this phase.
    pub fn narration<'a>(&self, finding: &'a Finding) -> &'a str {
        let e = &finding.explanation;
        match self {
            Phase::Abnormality => &e.abnormality_explanation,
            Phase::InputAppearance => &e.input_scan_appearance,
            Phase::NormalComparison => &e.normal_scan_appearance,
        }
    }
}

impl From<Phase> for u8 {
    fn from(p: Phase) -> u8 {
        p as u8
    }
}

impl TryFrom<u8> for Phase {
    type Error = String;
    fn try_from(v: u8) -> Result<Self, String> {
        match v {
            1 => Ok(Phase::Abnormality),
            2 => Ok(Phase::InputAppearance),
            3 => Ok(Phase::NormalComparison),
            _ => Err(format!("phase must be 1, 2 or 3, got {v}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SlicePanel {
    pub window: WindowPreset,
    pub box_overlay: Option<BoundingBox3D>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Organ3dPanel {
    pub organ: String,
    /// Frames per full turn.
    pub turntable_frames: usize,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Panels {
    pub query: Option<SlicePanel>,
    pub normal: Option<SlicePanel>,
    pub organ3d: Option<Organ3dPanel>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Segment {
    /// Rank of the finding; absent for the notice segment.
    pub finding_id: Option<u32>,
    pub phase: Option<Phase>,
    pub narration_text: String,
    pub panels: Panels,
    /// Axial slice shown at each frame; empty when no slice panel is visible.
    pub slice_schedule: Vec<usize>,
    /// Padded length of both audio and video.
    pub duration: f64,
    pub narration_duration: f64,
    pub frame_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Storyboard {
    pub version: u32,
    pub fps: u32,
    pub resolution: [u32; 2],
    pub max_duration: f64,
    pub total_duration: f64,
    pub segments: Vec<Segment>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StoryboardConfig {
    pub fps: u32,
    pub resolution: [u32; 2],
    pub max_duration: f64,
    /// Seconds per full turn of the organ rendering.
    pub turntable_period: f64,
    pub windows: WindowTable,
}

impl Default for StoryboardConfig {
    fn default() -> Self {
        Self {
            fps: 10,
            resolution: [1280, 720],
            max_duration: 180.0,
            turntable_period: 6.0,
            windows: WindowTable::default(),
        }
    }
}

impl StoryboardConfig {
    pub fn validate(&self) -> Result<(), StoryboardError> {
        let bad = |m: String| Err(StoryboardError::InvalidConfig(m));
        if self.fps == 0 {
            return bad("fps must be > 0".into());
        }
        if self.resolution.iter().any(|&r| r == 0) {
            return bad("resolution must be nonzero".into());
        }
        if !(self.max_duration.is_finite() && self.max_duration > 0.0) {
            return bad("max_duration must be > 0".into());
        }
        if !(self.turntable_period.is_finite() && self.turntable_period > 0.0) {
            return bad("turntable_period must be > 0".into());
        }
        self.windows.validate().map_err(StoryboardError::InvalidConfig)
    }

    pub fn turntable_frames(&self) -> usize {
        ((self.turntable_period * self.fps as f64).round() as usize).max(1)
    }
}

/// Per-finding visual inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct FindingInput {
    pub finding: Finding,
    /// Union box on the query grid; `None` when no organ mask was found.
    pub query_box: Option<BoundingBox3D>,
    /// Union box on the registered normal grid.
    pub normal_box: Option<BoundingBox3D>,
    /// Organ whose mesh fills the 3D panel.
    pub mesh_organ: Option<String>,
}

/// Frame-to-slice map scrolling from `box.min[2]` to `box.max[2]` over
/// `round(duration * fps)` frames, rounding to the nearest slice.
pub fn plan_scroll(
    bbox: &BoundingBox3D,
    duration: f64,
    fps: u32,
) -> Result<Vec<usize>, StoryboardError> {
    let n = frame_count(duration, fps)?;
    Ok(scroll(bbox.min[2], bbox.max[2], n))
}

fn scroll(lo: usize, hi: usize, n: usize) -> Vec<usize> {
    if n == 1 {
        return vec![lo];
    }
    let span = hi - lo;
    let d = n - 1;
    (0..n).map(|f| lo + (2 * f * span + d) / (2 * d)).collect()
}

fn frame_count(duration: f64, fps: u32) -> Result<usize, StoryboardError> {
    let n = (duration * fps as f64).round();
    if !(n >= 1.0) || fps == 0 {
        return Err(StoryboardError::ZeroFrames { duration, fps });
    }
    Ok(n as usize)
}

/// Pad the shorter of audio and video to the longer: video by repeating its
/// last frame, audio with trailing silence. Returns `(visual, audio)`.
/// Both results are equal, so they differ by less than one frame at any
/// frame rate.
pub fn synchronize(narration_duration: f64, visual_duration: f64, _fps: u32) -> (f64, f64) {
    let d = narration_duration.max(visual_duration).max(0.0);
    (d, d)
}

/// Compile the presentation plan.
///
/// `narration_seconds` gives the spoken length of a text; every narration
/// string of the storyboard is looked up through it.
pub fn build_storyboard(
    inputs: &[FindingInput],
    query_slices: usize,
    cfg: &StoryboardConfig,
    narration_seconds: &dyn Fn(&str) -> f64,
) -> Result<Storyboard, StoryboardError> {
    cfg.validate()?;
    let mut ordered: Vec<&FindingInput> = inputs.iter().collect();
    ordered.sort_by_key(|f| f.finding.rank);
    for (i, f) in ordered.iter().enumerate() {
        if f.finding.rank as usize != i + 1 {
            return Err(StoryboardError::InvalidInput(format!(
                "finding ranks must be 1..={}, got {}",
                inputs.len(),
                f.finding.rank
            )));
        }
        for b in [f.query_box, f.normal_box].iter().flatten() {
            if b.max[2] >= query_slices || (0..3).any(|a| b.min[a] > b.max[a]) {
                return Err(StoryboardError::InvalidInput(format!(
                    "box {b:?} does not fit {query_slices} slices"
                )));
            }
        }
    }
    if query_slices == 0 && !ordered.is_empty() {
        return Err(StoryboardError::InvalidInput("query volume has no slices".into()));
    }

    let spoken = |text: &str| -> Result<f64, StoryboardError> {
        let d = narration_seconds(text);
        if d.is_finite() && d > 0.0 {
            Ok(d)
        } else {
            Err(StoryboardError::InvalidInput(format!(
                "narration length {d} for {text:?}"
            )))
        }
    };

    let mut segments = Vec::with_capacity(3 * ordered.len().max(1));
    if ordered.is_empty() {
        let narration = spoken(NOTICE_TEXT)?;
        let (duration, _) = synchronize(narration, narration, cfg.fps);
        segments.push(Segment {
            finding_id: None,
            phase: None,
            narration_text: NOTICE_TEXT.to_string(),
            panels: Panels::default(),
            slice_schedule: Vec::new(),
            duration,
            narration_duration: narration,
            frame_count: frame_count(duration, cfg.fps)?,
        });
    }

    for input in &ordered {
        let f = &input.finding;
        let window = match f.organs.first() {
            Some(first) => {
                let w = select_window(first, &cfg.windows);
                for other in &f.organs[1..] {
                    let o = select_window(other, &cfg.windows);
                    if o.name != w.name {
                        log::info!(
                            "finding {} spans {} ({}) and {} ({}); using the first organ's window",
                            f.rank,
                            first,
                            w.name,
                            other,
                            o.name
                        );
                    }
                }
                w
            }
            None => select_window("", &cfg.windows),
        };
        let organ3d = match (&input.query_box, &input.mesh_organ) {
            (Some(_), Some(organ)) => Some(Organ3dPanel {
                organ: organ.clone(),
                turntable_frames: cfg.turntable_frames(),
            }),
            _ => None,
        };
        if input.query_box.is_none() {
            log::warn!(
                "finding {} has no located region; showing unmarked slices",
                f.rank
            );
        }
        for phase in Phase::ALL {
            let text = phase.narration(f).to_string();
            let narration = spoken(&text)?;
            let (duration, _) = synchronize(narration, narration, cfg.fps);
            let frames = frame_count(duration, cfg.fps)?;
            let slice_schedule = match &input.query_box {
                Some(b) => scroll(b.min[2], b.max[2], frames),
                None => vec![query_slices / 2; frames],
            };
            let query = Some(SlicePanel {
                window: window.clone(),
                box_overlay: input.query_box,
            });
            let normal = (phase == Phase::NormalComparison).then(|| SlicePanel {
                window: window.clone(),
                box_overlay: input.query_box.and(input.normal_box),
            });
            segments.push(Segment {
                finding_id: Some(f.rank),
                phase: Some(phase),
                narration_text: text,
                panels: Panels {
                    query,
                    normal,
                    organ3d: organ3d.clone(),
                },
                slice_schedule,
                duration,
                narration_duration: narration,
                frame_count: frames,
            });
        }
    }

    let total: f64 = segments.iter().map(|s| s.duration).sum();
    if total > cfg.max_duration {
        return Err(StoryboardError::DurationBudgetExceeded {
            total,
            max: cfg.max_duration,
            breakdown: segments.iter().map(segment_timing).collect(),
        });
    }
    Ok(Storyboard {
        version: STORYBOARD_VERSION,
        fps: cfg.fps,
        resolution: cfg.resolution,
        max_duration: cfg.max_duration,
        total_duration: total,
        segments,
    })
}

fn segment_timing(s: &Segment) -> SegmentTiming {
    let label = match (s.finding_id, s.phase) {
        (Some(id), Some(p)) => format!("finding {id} phase {}", p as u8),
        _ => "notice".to_string(),
    };
    SegmentTiming {
        label,
        seconds: s.duration,
    }
}

impl Storyboard {
    /// Canonical JSON: fixed field order, pretty-printed, trailing newline.
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("storyboard serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self, StoryboardError> {
        let sb: Storyboard =
            serde_json::from_str(text).map_err(|e| StoryboardError::Malformed(e.to_string()))?;
        sb.validate()?;
        Ok(sb)
    }

    pub fn frame_count(&self) -> usize {
        self.segments.iter().map(|s| s.frame_count).sum()
    }

    /// Structural invariants of a compiled storyboard.
    pub fn validate(&self) -> Result<(), StoryboardError> {
        let bad = |m: String| Err(StoryboardError::Malformed(m));
        if self.version != STORYBOARD_VERSION {
            return bad(format!("unsupported version {}", self.version));
        }
        if self.fps == 0 || self.resolution.iter().any(|&r| r == 0) {
            return bad("fps and resolution must be nonzero".into());
        }
        let sum: f64 = self.segments.iter().map(|s| s.duration).sum();
        if !(self.total_duration.is_finite()
            && (sum - self.total_duration).abs() <= 1e-6 * sum.max(1.0))
        {
            return bad(format!("total {} != sum {sum}", self.total_duration));
        }
        if !(self.total_duration <= self.max_duration) {
            return bad("total duration exceeds max_duration".into());
        }
        let mut prev: Option<(u32, u8)> = None;
        for (i, s) in self.segments.iter().enumerate() {
            if !(s.duration.is_finite() && s.duration > 0.0) || s.narration_duration > s.duration {
                return bad(format!("segment {i} has inconsistent durations"));
            }
            let expected = (s.duration * self.fps as f64).round() as usize;
            if s.frame_count != expected {
                return bad(format!("segment {i} frame count {} != {expected}", s.frame_count));
            }
            if !s.slice_schedule.is_empty() && s.slice_schedule.len() != s.frame_count {
                return bad(format!("segment {i} schedule length mismatch"));
            }
            if s.slice_schedule.windows(2).any(|w| w[1] < w[0]) {
                return bad(format!("segment {i} schedule is not monotone"));
            }
            match (s.finding_id, s.phase) {
                (Some(id), Some(p)) => {
                    let key = (id, p as u8);
                    let ok = match prev {
                        None => key == (1, 1),
                        Some((pid, pp)) => {
                            (id == pid && p as u8 == pp + 1) || (id == pid + 1 && pp == 3 && p as u8 == 1)
                        }
                    };
                    if !ok {
                        return bad(format!("segment {i} out of order: {key:?}"));
                    }
                    if s.panels.query.is_none() {
                        return bad(format!("segment {i} lacks the query panel"));
                    }
                    if (p == Phase::NormalComparison) != s.panels.normal.is_some() {
                        return bad(format!("segment {i} normal panel does not match its phase"));
                    }
                    prev = Some(key);
                }
                (None, None) => {
                    if self.segments.len() != 1 {
                        return bad("a notice segment must stand alone".into());
                    }
                }
                _ => return bad(format!("segment {i} has a finding id without a phase")),
            }
        }
        if let Some((_, p)) = prev {
            if p != 3 {
                return bad("last finding is missing phases".into());
            }
        }
        Ok(())
    }
}
