//! Hand-built scenes where planning beyond the next interval pays off.
//!
//! Lane 0 is the right-most lane. All surrounding vehicles keep their lane and
//! hold their initial speed as desired speed.

use crate::world::{
    DriverParams, Scenario, ScenarioVehicle, VehicleState, DEFAULT_LANE_WIDTH,
    DEFAULT_VEHICLE_LENGTH, EGO_ID, SCENARIO_FORMAT_VERSION,
};

/// Ego desired speed in both scenes.
pub const CRITICAL_DESIRED_SPEED: f64 = 30.0;
/// Road left ahead of the ego at the start.
pub const CRITICAL_ROAD_AHEAD: f64 = 1200.0;
pub const CRITICAL_MAX_DURATION: f64 = 90.0;
const EGO_START: f64 = 200.0;

/// Shared speed of every vehicle in the seven-vehicle scene.
pub const SCENARIO_A_SPEED: f64 = 20.0;
/// Shared speed of every vehicle in the three-vehicle scene.
pub const SCENARIO_B_SPEED: f64 = 22.0;

fn steady(id: u32, lane: usize, s: f64, v: f64) -> ScenarioVehicle {
    let mut state = VehicleState::new(id, lane, s, v);
    state.length = DEFAULT_VEHICLE_LENGTH;
    ScenarioVehicle {
        state,
        driver: DriverParams {
            v0: v,
            lane_change_prob_per_s: 0.0,
            ..DriverParams::default()
        },
    }
}

fn scene(name_seed: u64, ego: VehicleState, vehicles: Vec<ScenarioVehicle>) -> Scenario {
    Scenario {
        format_version: SCENARIO_FORMAT_VERSION,
        lane_count: 3,
        road_length: EGO_START + CRITICAL_ROAD_AHEAD,
        lane_width: DEFAULT_LANE_WIDTH,
        vehicles,
        ego_start: ego,
        ego_desired_speed: CRITICAL_DESIRED_SPEED,
        seed: name_seed,
        max_duration: CRITICAL_MAX_DURATION,
    }
}

/// Ego on the left lane (2) inside its initial gap `g0` between vehicles 1 and 2.
///
/// The middle lane holds vehicle 3 just ahead and vehicle 4 well behind, so
/// the gap `g1` between them needs a slow lane change. The right lane holds
/// three vehicles behind the ego and is free ahead; it only becomes a
/// candidate once the ego is on the middle lane. Everyone drives at 20 m/s.
pub fn critical_scenario_a() -> Scenario {
    let v = SCENARIO_A_SPEED;
    let s = EGO_START;
    let vehicles = vec![
        // g0: follower and leader on the ego lane
        steady(1, 2, s - 45.0, v),
        steady(2, 2, s + 25.5, v),
        // g1: leader with a short headway, follower far back
        steady(3, 1, s + 20.0, v),
        steady(4, 1, s - 45.0, v),
        // right lane, all behind
        steady(5, 0, s - 50.0, v),
        steady(6, 0, s - 90.0, v),
        steady(7, 0, s - 130.0, v),
    ];
    scene(0xa, VehicleState::new(EGO_ID, 2, s, v), vehicles)
}

/// Ego on the right lane behind vehicle 1, with vehicle 2 just ahead on the
/// middle lane and vehicle 3 behind it; the left lane is empty. Everyone
/// drives at 22 m/s, so reaching the middle-lane gap between 3 and 2 takes braking.
pub fn critical_scenario_b() -> Scenario {
    let v = SCENARIO_B_SPEED;
    let s = EGO_START;
    let vehicles = vec![
        steady(1, 0, s + 30.0, v),
        steady(2, 1, s + 17.0, v),
        steady(3, 1, s - 45.0, v),
    ];
    scene(0xb, VehicleState::new(EGO_ID, 0, s, v), vehicles)
}
