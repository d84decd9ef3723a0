#![no_main]

use libfuzzer_sys::fuzz_target;
use radvid_core::report::parse::parse_organ_answer;

fuzz_target!(|data: &str| {
    let _ = parse_organ_answer(data);
});
