#![no_main]

use libfuzzer_sys::fuzz_target;
use radvid_core::report::MockLlm;

fuzz_target!(|data: &str| {
    let _ = MockLlm::from_json(data);
});
