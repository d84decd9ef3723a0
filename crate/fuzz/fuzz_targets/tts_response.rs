#![no_main]

use libfuzzer_sys::fuzz_target;
use radvid_core::media::{split_frames, TtsResponse};

fuzz_target!(|data: &[u8]| {
    if let Ok(r) = serde_json::from_slice::<TtsResponse>(data) {
        if let Some([w, h]) = r.frame_size {
            let _ = split_frames(r.audio_b64.as_bytes(), w, h);
        }
    }
});
