#![no_main]

use gapdrive::agents::DriveSettings;
use gapdrive::harness::{parse_plan_debug_input, plan_debug};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &str| {
    if let Ok(input) = parse_plan_debug_input(data) {
        let _ = plan_debug(&input, &DriveSettings::default());
    }
});
