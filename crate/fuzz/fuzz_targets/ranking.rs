#![no_main]

use libfuzzer_sys::fuzz_target;
use radvid_core::report::parse_ranking;

fuzz_target!(|input: (u8, &str)| {
    let n = input.0 as usize % 16;
    if let Ok(order) = parse_ranking(input.1, n) {
        let mut sorted = order.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, (1..=n).collect::<Vec<_>>());
    }
});
