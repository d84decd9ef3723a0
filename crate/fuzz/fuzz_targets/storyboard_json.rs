#![no_main]

use libfuzzer_sys::fuzz_target;
use radvid_core::storyboard::Storyboard;

fuzz_target!(|data: &str| {
    let _ = Storyboard::from_json(data);
});
