use std::collections::BTreeMap;
use std::sync::Arc;

use radvid_core::media::{
    mux, narrate_all, AvatarTrack, FrameLayout, FrameSource, MediaError, MuxTarget, NarrationClip,
    NarrationProvider, OfflineNarrator, Pcm, RgbImage, StoryboardVideo, BACKGROUND,
    DEFAULT_AVATAR_FRACTION,
};
use radvid_core::organ3d::{marching_cubes, turntable};
use radvid_core::phantom::{chest, ChestLayout};
use radvid_core::report::{ExplanationTriple, Finding};
use radvid_core::segmentation::{bounding_box, OrganMask};
use radvid_core::storyboard::{build_storyboard, FindingInput, Storyboard, StoryboardConfig};
use radvid_core::volume::{CtVolume, GrayImage};
use radvid_core::Grid;

const FPS: u32 = 10;
const RES: [u32; 2] = [320, 180];

struct Scene {
    query: CtVolume,
    normal: CtVolume,
    input: FindingInput,
    turntables: BTreeMap<String, Vec<GrayImage>>,
    cfg: StoryboardConfig,
}

fn scene() -> Scene {
    let grid = Grid::new([48, 48, 16], [1.0, 1.0, 3.0], [0.0; 3]);
    let query = chest(&grid, "query", true);
    let normal = chest(&grid, "normal", false);
    let layout = ChestLayout::for_dims(grid.dims);
    let voxels = (0..grid.len())
        .map(|i| u8::from(layout.right_lung.contains(grid.coords(i))))
        .collect();
    let mask = OrganMask::new("right lung", grid, voxels, "query").unwrap();
    let bbox = bounding_box(&mask).unwrap();
    let cfg = StoryboardConfig {
        fps: FPS,
        resolution: RES,
        turntable_period: 2.0,
        ..Default::default()
    };
    let mesh = marching_cubes(&mask).unwrap();
    let turn = turntable(&mesh, cfg.turntable_frames(), (64, 64)).unwrap();
    let input = FindingInput {
        finding: Finding {
            rank: 1,
            phrase: "nodule in the right lung".into(),
            organs: vec!["right lung".into()],
            explanation: ExplanationTriple {
                abnormality_explanation: "A small round spot sits in your right lung.".into(),
                input_scan_appearance: "It shows up as a bright dot.".into(),
                normal_scan_appearance: "A healthy lung looks evenly dark.".into(),
            },
        },
        query_box: Some(bbox),
        normal_box: Some(bbox),
        mesh_organ: Some("right lung".into()),
    };
    Scene {
        query,
        normal,
        input,
        turntables: BTreeMap::from([("right lung".to_string(), turn)]),
        cfg,
    }
}

fn layout() -> FrameLayout {
    FrameLayout::new(RES[0] as usize, RES[1] as usize, DEFAULT_AVATAR_FRACTION).unwrap()
}

fn texts(sb: &Storyboard) -> Vec<String> {
    sb.segments.iter().map(|s| s.narration_text.clone()).collect()
}

fn offline() -> OfflineNarrator {
    OfflineNarrator::new(150.0, 8000, FPS as f64, 40)
}

#[test]
fn frames_and_audio_line_up() {
    let s = scene();
    let n = offline();
    let sb = build_storyboard(&[s.input.clone()], 16, &s.cfg, &|t| {
        radvid_core::media::estimate_duration(t, n.wpm)
    })
    .unwrap();
    let clips = narrate_all(&texts(&sb), &n, 2).unwrap();
    let video = StoryboardVideo::new(
        &sb,
        layout(),
        &s.query,
        Some(&s.normal),
        &s.turntables,
        &clips,
        true,
    )
    .unwrap();
    assert_eq!(video.frame_count(), sb.frame_count());
    let audio = video.audio(8000);
    let video_s = video.frame_count() as f64 / FPS as f64;
    assert!((audio.duration() - video_s).abs() < 1.0 / FPS as f64);
    assert!((video_s - sb.total_duration).abs() < 1.0 / FPS as f64);

    let dir = tempfile::tempdir().unwrap();
    let a = mux(&video, &audio, FPS, &dir.path().join("a.mp4"), None).unwrap();
    let b = mux(&video, &audio, FPS, &dir.path().join("b.mp4"), None).unwrap();
    assert_eq!(a.frame_hashes, b.frame_hashes);
    assert_eq!(a.frame_count, sb.frame_count());
    assert!(matches!(a.target, MuxTarget::Fallback(_)));
}

#[test]
fn phase_panels_follow_the_storyboard() {
    let s = scene();
    let n = offline();
    let sb = build_storyboard(&[s.input.clone()], 16, &s.cfg, &|t| {
        radvid_core::media::estimate_duration(t, n.wpm)
    })
    .unwrap();
    let clips = narrate_all(&texts(&sb), &n, 1).unwrap();
    let video = StoryboardVideo::new(
        &sb,
        layout(),
        &s.query,
        Some(&s.normal),
        &s.turntables,
        &clips,
        false,
    )
    .unwrap();
    let l = layout();
    let is_bg = |f: &RgbImage, r: radvid_core::media::Rect| {
        (r.y..r.bottom()).all(|y| (r.x..r.right()).all(|x| f.get(x, y) == BACKGROUND))
    };
    let first = video.frame(0).unwrap();
    assert!(!is_bg(&first, l.query));
    assert!(is_bg(&first, l.normal));
    let p3 = sb.segments[0].frame_count + sb.segments[1].frame_count;
    let third = video.frame(p3).unwrap();
    assert!(!is_bg(&third, l.query));
    assert!(!is_bg(&third, l.normal));
    assert!(!is_bg(&third, l.organ3d));
}

/// Clips shorter than their segment, with a distinct avatar frame per index
/// and a nonzero tone, so padding is visible.
struct Short;

impl NarrationProvider for Short {
    fn name(&self) -> &str {
        "short"
    }

    fn narrate(&self, text: &str) -> Result<NarrationClip, MediaError> {
        let duration = 1.0;
        let frames = (0..10u8)
            .map(|i| Arc::new(RgbImage::new(40, 40, [20 * i, 200, 255 - 20 * i])))
            .collect();
        Ok(NarrationClip {
            audio: Pcm {
                samples: vec![1000; 8000],
                sample_rate: 8000,
            },
            duration,
            avatar: Some(AvatarTrack {
                fps: FPS as f64,
                frames,
            }),
            transcript: text.to_string(),
        })
    }
}

#[test]
fn short_clips_hold_last_frame_and_pad_silence() {
    let s = scene();
    let sb = build_storyboard(&[s.input.clone()], 16, &s.cfg, &|_| 3.0).unwrap();
    let clips = narrate_all(&texts(&sb), &Short, 2).unwrap();
    let l = layout();
    let video =
        StoryboardVideo::new(&sb, l, &s.query, Some(&s.normal), &s.turntables, &clips, false)
            .unwrap();
    let avatar_px = |i: usize| {
        let f = video.frame(i).unwrap();
        f.get(l.avatar.x + l.avatar.w / 2, l.avatar.y + l.avatar.h / 2)
    };
    let last = clips[0].avatar.as_ref().unwrap().frames[9].get(0, 0);
    assert_ne!(avatar_px(8), last);
    for i in 9..30 {
        assert_eq!(avatar_px(i), last, "frame {i}");
    }
    let audio = video.audio(8000);
    assert_eq!(audio.samples.len(), 3 * 3 * 8000);
    assert!(audio.samples[..8000].iter().all(|&v| v == 1000));
    assert!(audio.samples[8000..24000].iter().all(|&v| v == 0));
    assert!(audio.samples[24000..32000].iter().all(|&v| v == 1000));
}

#[test]
fn missing_turntable_is_rejected() {
    let s = scene();
    let sb = build_storyboard(&[s.input.clone()], 16, &s.cfg, &|_| 1.0).unwrap();
    let clips = narrate_all(&texts(&sb), &Short, 2).unwrap();
    let empty = BTreeMap::new();
    let r = StoryboardVideo::new(&sb, layout(), &s.query, Some(&s.normal), &empty, &clips, true);
    assert!(matches!(r, Err(MediaError::InvalidInput(_))));
}
