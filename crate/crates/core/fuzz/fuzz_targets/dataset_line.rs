#![no_main]

use gapdrive::learn::{parse_transition, Dataset};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &str| {
    if let Ok(t) = parse_transition(data) {
        let _ = Dataset::new(vec![t]);
    }
});
