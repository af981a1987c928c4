use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{
    DriverParams, Scenario, ScenarioVehicle, VehicleState, DEFAULT_LANE_WIDTH,
    DEFAULT_VEHICLE_LENGTH, EGO_ID, MAX_VEHICLES,
};
use crate::{Error, Result};

pub const SCENARIO_FORMAT_VERSION: u32 = 1;

/// Ranges used by [`generate_random_scenario`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub lane_count: usize,
    pub road_length: f64,
    pub ego_s: f64,
    /// Traffic is spawned in `[ego_s - spawn_behind, ego_s + spawn_ahead]`.
    pub spawn_behind: f64,
    pub spawn_ahead: f64,
    pub v0_range: (f64, f64),
    pub ego_speed_range: (f64, f64),
    pub ego_desired_speed: f64,
    pub lane_change_prob_range: (f64, f64),
    /// Minimum bumper-to-bumper spacing at placement.
    pub min_spacing: f64,
    /// Relative jitter applied to the IDM constants of each vehicle.
    pub jitter: f64,
    pub max_duration: f64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            lane_count: 3,
            road_length: 4000.0,
            ego_s: 600.0,
            spawn_behind: 300.0,
            spawn_ahead: 700.0,
            v0_range: (15.0, 30.0),
            ego_speed_range: (15.0, 25.0),
            ego_desired_speed: 30.0,
            lane_change_prob_range: (0.0, 0.2),
            min_spacing: 12.0,
            jitter: 0.1,
            max_duration: 60.0,
        }
    }
}

/// Random traffic around the ego; identical `(n_vehicles, seed)` yield identical scenarios.
pub fn generate_random_scenario(
    n_vehicles: usize,
    seed: u64,
    config: &ScenarioConfig,
) -> Result<Scenario> {
    if n_vehicles > MAX_VEHICLES {
        return Err(Error::InvalidArgument(format!(
            "n_vehicles {n_vehicles} exceeds {MAX_VEHICLES}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let lanes = config.lane_count;
    let ego_lane = rng.gen_range(0..lanes);
    let ego_speed = rng.gen_range(config.ego_speed_range.0..=config.ego_speed_range.1);

    // (lane, front position) of everything placed so far, ego included.
    let mut placed: Vec<(usize, f64)> = vec![(ego_lane, config.ego_s)];
    let lo = (config.ego_s - config.spawn_behind).max(DEFAULT_VEHICLE_LENGTH);
    let hi = (config.ego_s + config.spawn_ahead).min(config.road_length);
    let pitch = DEFAULT_VEHICLE_LENGTH + config.min_spacing;
    let max_attempts = 400 * (n_vehicles + 1);
    let mut attempts = 0;
    while placed.len() < n_vehicles + 1 {
        attempts += 1;
        if attempts > max_attempts {
            return Err(Error::Placement {
                requested: n_vehicles,
                placed: placed.len() - 1,
            });
        }
        let lane = rng.gen_range(0..lanes);
        let s = rng.gen_range(lo..hi);
        if placed
            .iter()
            .all(|&(l, other)| l != lane || (other - s).abs() >= pitch)
        {
            placed.push((lane, s));
        }
    }

    let mut vehicles = Vec::with_capacity(n_vehicles);
    for (k, &(lane, s)) in placed.iter().enumerate().skip(1) {
        let j = |rng: &mut ChaCha8Rng| 1.0 + rng.gen_range(-config.jitter..=config.jitter);
        let base = DriverParams::default();
        let driver = DriverParams {
            v0: rng.gen_range(config.v0_range.0..=config.v0_range.1),
            time_headway: base.time_headway * j(&mut rng),
            a_max: base.a_max * j(&mut rng),
            b_comf: base.b_comf * j(&mut rng),
            s0: base.s0 * j(&mut rng),
            delta: (base.delta * j(&mut rng)).max(1.0),
            lane_change_prob_per_s: rng
                .gen_range(config.lane_change_prob_range.0..=config.lane_change_prob_range.1),
            b_emergency: base.b_emergency,
        };
        let start_fraction = rng.gen_range(0.85..=1.0);
        let mut state = VehicleState::new(k as u32, lane, s, driver.v0 * start_fraction);
        state.length = DEFAULT_VEHICLE_LENGTH;
        vehicles.push(ScenarioVehicle { state, driver });
    }

    let mut ego = VehicleState::new(EGO_ID, ego_lane, config.ego_s, ego_speed);
    settle_initial_speeds(&mut vehicles, &mut ego, lanes);

    let scenario = Scenario {
        format_version: SCENARIO_FORMAT_VERSION,
        lane_count: lanes,
        road_length: config.road_length,
        lane_width: DEFAULT_LANE_WIDTH,
        vehicles,
        ego_start: ego,
        ego_desired_speed: config.ego_desired_speed,
        seed,
        max_duration: config.max_duration,
    };
    debug_assert!(scenario.validate().is_ok());
    Ok(scenario)
}

/// Caps each start speed, front to back per lane, so no follower starts
/// inside its leader's headway.
fn settle_initial_speeds(vehicles: &mut [ScenarioVehicle], ego: &mut VehicleState, lanes: usize) {
    const HEADWAY: f64 = 1.2;
    for lane in 0..lanes {
        // index into vehicles, or None for the ego
        let mut order: Vec<(f64, Option<usize>)> = vehicles
            .iter()
            .enumerate()
            .filter(|(_, v)| v.state.lane_index == lane)
            .map(|(i, v)| (v.state.s, Some(i)))
            .collect();
        if ego.lane_index == lane {
            order.push((ego.s, None));
        }
        order.sort_by(|a, b| b.0.total_cmp(&a.0));
        let mut ahead: Option<(f64, f64)> = None; // (rear, speed)
        for &(_, who) in &order {
            let state = match who {
                Some(i) => &mut vehicles[i].state,
                None => &mut *ego,
            };
            if let Some((rear, v_leader)) = ahead {
                let gap = rear - state.s;
                let cap = ((gap - 2.0) / HEADWAY).max(0.0).min(v_leader + 2.0);
                state.v = state.v.min(cap);
            }
            ahead = Some((state.rear(), state.v));
        }
    }
}
