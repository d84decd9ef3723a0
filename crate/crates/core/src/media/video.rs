use std::collections::BTreeMap;

use super::audio::{samples_for, Pcm};
use super::compose::{compose_frame, slice_highlight, CaptionTrack, FrameInputs, FrameLayout, SliceView};
use super::image::RgbImage;
use super::narration::NarrationClip;
use super::MediaError;
use crate::storyboard::{SlicePanel, Storyboard};
use crate::volume::{axial_slice, CtVolume, GrayImage};

/// Random-access sequence of equally sized frames.
pub trait FrameSource: Sync {
    fn frame_count(&self) -> usize;
    /// `(width, height)`.
    fn size(&self) -> (usize, usize);
    fn frame(&self, index: usize) -> Result<RgbImage, MediaError>;
}

impl FrameSource for Vec<RgbImage> {
    fn frame_count(&self) -> usize {
        self.len()
    }

    fn size(&self) -> (usize, usize) {
        self.first().map_or((0, 0), |f| (f.width, f.height))
    }

    fn frame(&self, index: usize) -> Result<RgbImage, MediaError> {
        self.get(index)
            .cloned()
            .ok_or_else(|| MediaError::InvalidInput(format!("frame {index} out of range")))
    }
}

/// Frames and soundtrack of a storyboard.
pub struct StoryboardVideo<'a> {
    storyboard: &'a Storyboard,
    layout: FrameLayout,
    query: &'a CtVolume,
    normal: Option<&'a CtVolume>,
    turntables: &'a BTreeMap<String, Vec<GrayImage>>,
    clips: &'a [NarrationClip],
    captions: Vec<CaptionTrack>,
    /// First frame of each segment, plus the total.
    starts: Vec<usize>,
}

impl<'a> StoryboardVideo<'a> {
    /// `normal` must be the reference volume registered onto the query grid;
    /// `turntables` holds the rendered turn of every organ the storyboard
    /// shows in 3D; `clips` has one narration per segment.
    pub fn new(
        storyboard: &'a Storyboard,
        layout: FrameLayout,
        query: &'a CtVolume,
        normal: Option<&'a CtVolume>,
        turntables: &'a BTreeMap<String, Vec<GrayImage>>,
        clips: &'a [NarrationClip],
        show_captions: bool,
    ) -> Result<Self, MediaError> {
        let bad = |m: String| Err(MediaError::InvalidInput(m));
        let [w, h] = storyboard.resolution;
        if (layout.width, layout.height) != (w as usize, h as usize) {
            return bad(format!(
                "layout is {}x{} but the storyboard is {w}x{h}",
                layout.width, layout.height
            ));
        }
        if clips.len() != storyboard.segments.len() {
            return bad(format!(
                "{} narration clips for {} segments",
                clips.len(),
                storyboard.segments.len()
            ));
        }
        let nz = query.dims()[2];
        let mut starts = vec![0];
        for (i, (seg, clip)) in storyboard.segments.iter().zip(clips).enumerate() {
            if clip.transcript != seg.narration_text {
                return bad(format!("clip {i} does not narrate its segment"));
            }
            if seg.panels.normal.is_some() {
                match normal {
                    None => return bad(format!("segment {i} needs the reference volume")),
                    Some(n) if !n.grid().same_lattice(query.grid()) => {
                        return bad("reference volume is not on the query grid".into())
                    }
                    _ => {}
                }
            }
            let has_slice = seg.panels.query.is_some() || seg.panels.normal.is_some();
            if has_slice
                && (seg.slice_schedule.len() != seg.frame_count
                    || seg.slice_schedule.iter().any(|&z| z >= nz))
            {
                return bad(format!("segment {i} has an invalid slice schedule"));
            }
            if let Some(o) = &seg.panels.organ3d {
                if !matches!(turntables.get(&o.organ), Some(t) if !t.is_empty()) {
                    return bad(format!("no turntable rendered for {:?}", o.organ));
                }
            }
            starts.push(starts[i] + seg.frame_count);
        }
        let captions = storyboard
            .segments
            .iter()
            .map(|s| {
                let text = if show_captions { s.narration_text.as_str() } else { "" };
                CaptionTrack::new(text, s.narration_duration, layout.caption)
            })
            .collect();
        Ok(Self {
            storyboard,
            layout,
            query,
            normal,
            turntables,
            clips,
            captions,
            starts,
        })
    }

    pub fn fps(&self) -> u32 {
        self.storyboard.fps
    }

    /// Segment index and frame within it.
    pub fn locate(&self, index: usize) -> Option<(usize, usize)> {
        if index >= *self.starts.last()? {
            return None;
        }
        let s = self.starts.partition_point(|&b| b <= index) - 1;
        Some((s, index - self.starts[s]))
    }

    fn slice_view(
        &self,
        vol: &CtVolume,
        panel: &SlicePanel,
        z: usize,
    ) -> Result<SliceView, MediaError> {
        let image = axial_slice(vol, z, &panel.window)
            .map_err(|e| MediaError::InvalidInput(e.to_string()))?;
        let [nx, ny, _] = vol.dims();
        let highlight = panel
            .box_overlay
            .as_ref()
            .and_then(|b| slice_highlight(b, z, nx, ny));
        Ok(SliceView { image, highlight })
    }

    /// Concatenated narration, each clip padded with silence or trimmed to
    /// its segment's frame span so audio and video end together.
    pub fn audio(&self, sample_rate: u32) -> Pcm {
        let fps = self.storyboard.fps as f64;
        let mut out = Vec::new();
        for (i, clip) in self.clips.iter().enumerate() {
            let begin = samples_for(self.starts[i] as f64 / fps, sample_rate);
            let end = samples_for(self.starts[i + 1] as f64 / fps, sample_rate);
            let mut pcm = clip.audio.resampled(sample_rate);
            pcm.fit_to(end - begin);
            out.extend_from_slice(&pcm.samples);
        }
        Pcm {
            samples: out,
            sample_rate,
        }
    }
}

impl FrameSource for StoryboardVideo<'_> {
    fn frame_count(&self) -> usize {
        *self.starts.last().unwrap_or(&0)
    }

    fn size(&self) -> (usize, usize) {
        (self.layout.width, self.layout.height)
    }

    fn frame(&self, index: usize) -> Result<RgbImage, MediaError> {
        let (s, f) = self
            .locate(index)
            .ok_or_else(|| MediaError::InvalidInput(format!("frame {index} out of range")))?;
        let seg = &self.storyboard.segments[s];
        let t = f as f64 / self.storyboard.fps as f64;
        let z = seg.slice_schedule.get(f).copied();
        let query = match (&seg.panels.query, z) {
            (Some(p), Some(z)) => Some(self.slice_view(self.query, p, z)?),
            _ => None,
        };
        let normal = match (&seg.panels.normal, self.normal, z) {
            (Some(p), Some(v), Some(z)) => Some(self.slice_view(v, p, z)?),
            _ => None,
        };
        let organ = seg.panels.organ3d.as_ref().and_then(|o| {
            let turn = self.turntables.get(&o.organ)?;
            turn.get(f % turn.len())
        });
        let avatar = self.clips[s].avatar.as_ref().and_then(|a| a.frame_at(t));
        compose_frame(
            &self.layout,
            &FrameInputs {
                query: query.as_ref(),
                normal: normal.as_ref(),
                organ,
                avatar,
                caption: self.captions[s].at(t),
            },
        )
    }
}
