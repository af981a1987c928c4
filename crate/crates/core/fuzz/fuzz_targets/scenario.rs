#![no_main]

use gapdrive::world::{Scenario, World};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &str| {
    if let Ok(scenario) = Scenario::from_json(data) {
        let mut world = World::new(&scenario);
        for _ in 0..20 {
            let sp = world.ego_setpoint();
            world.step(&sp);
        }
    }
});
