//! Replays the checked-in fuzz corpus through the same entry points as the
//! fuzz targets, so the seeds stay valid inputs on stable toolchains.

use std::path::{Path, PathBuf};

use radvid_cli::PipelineConfig;
use radvid_core::media::{Pcm, TtsResponse};
use radvid_core::registration::TransformRecord;
use radvid_core::report::parse::parse_organ_answer;
use radvid_core::report::{parse_explanation, parse_ranking, MockLlm, DEFAULT_CHAR_BUDGET};
use radvid_core::segmentation::MaskData;
use radvid_core::storyboard::Storyboard;
use radvid_core::volume::CtVolume;

fn seeds(target: &str) -> Vec<(PathBuf, Vec<u8>)> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fuzz/corpus").join(target);
    let mut out: Vec<_> = std::fs::read_dir(&dir)
        .unwrap_or_else(|e| panic!("{}: {e}", dir.display()))
        .map(|e| {
            let p = e.unwrap().path();
            let bytes = std::fs::read(&p).unwrap();
            (p, bytes)
        })
        .collect();
    out.sort();
    assert!(!out.is_empty(), "no seeds for {target}");
    out
}

fn text(b: &[u8]) -> &str {
    std::str::from_utf8(b).unwrap()
}

#[test]
fn binary_seeds_decode() {
    for (p, b) in seeds("nifti_decode") {
        CtVolume::from_nifti_bytes(&b, "seed").unwrap_or_else(|e| panic!("{}: {e}", p.display()));
    }
    for (p, b) in seeds("mask_nifti") {
        MaskData::from_nifti_bytes(&b).unwrap_or_else(|e| panic!("{}: {e}", p.display()));
    }
    for (p, b) in seeds("wav_decode") {
        Pcm::from_wav_bytes(&b).unwrap_or_else(|e| panic!("{}: {e}", p.display()));
    }
}

#[test]
fn text_seeds_parse() {
    for (_, b) in seeds("tts_response") {
        serde_json::from_slice::<TtsResponse>(&b).unwrap();
    }
    for (_, b) in seeds("explanation") {
        parse_explanation(text(&b), DEFAULT_CHAR_BUDGET).unwrap();
    }
    for (_, b) in seeds("ranking") {
        let n = b[0] as usize % 16;
        parse_ranking(text(&b[1..]), n).unwrap();
    }
    for (_, b) in seeds("organ_answer") {
        let _ = parse_organ_answer(text(&b));
    }
    for (_, b) in seeds("mock_fixture") {
        MockLlm::from_json(text(&b)).unwrap();
    }
    for (_, b) in seeds("config_toml") {
        PipelineConfig::from_toml(text(&b)).unwrap();
    }
    for (_, b) in seeds("storyboard_json") {
        Storyboard::from_json(text(&b)).unwrap();
    }
    for (_, b) in seeds("transform_json") {
        TransformRecord::from_json(text(&b)).unwrap();
    }
}

#[test]
fn every_target_has_seeds() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fuzz");
    let manifest = std::fs::read_to_string(root.join("Cargo.toml")).unwrap();
    let targets: Vec<&str> = manifest
        .lines()
        .filter_map(|l| l.strip_prefix("name = \""))
        .map(|l| l.trim_end_matches('"'))
        .filter(|n| *n != "radvid-fuzz")
        .collect();
    assert_eq!(targets.len(), 11);
    for t in targets {
        assert!(root.join("fuzz_targets").join(format!("{t}.rs")).is_file(), "{t}");
        seeds(t);
    }
}
