#![no_main]

use libfuzzer_sys::fuzz_target;
use radvid_core::media::Pcm;

fuzz_target!(|data: &[u8]| {
    if let Ok(pcm) = Pcm::from_wav_bytes(data) {
        let _ = pcm.resampled(22050);
    }
});
