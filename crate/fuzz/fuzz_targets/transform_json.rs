#![no_main]

use libfuzzer_sys::fuzz_target;
use radvid_core::registration::TransformRecord;

fuzz_target!(|data: &str| {
    if let Ok(t) = TransformRecord::from_json(data) {
        assert!(t.is_valid());
    }
});
