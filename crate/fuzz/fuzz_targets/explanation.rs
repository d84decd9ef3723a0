#![no_main]

use libfuzzer_sys::fuzz_target;
use radvid_core::report::{parse_explanation, DEFAULT_CHAR_BUDGET};

fuzz_target!(|data: &str| {
    if let Ok(t) = parse_explanation(data, DEFAULT_CHAR_BUDGET) {
        assert!(t.validate(DEFAULT_CHAR_BUDGET).is_ok());
    }
});
