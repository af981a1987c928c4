//! Straight multi-lane highway with IDM-driven traffic and a setpoint-driven ego.

mod idm;
mod scenario;
mod sim;

use serde::{Deserialize, Serialize};

pub use idm::{idm_acceleration, IdmOutcome};
pub use scenario::{generate_random_scenario, ScenarioConfig, SCENARIO_FORMAT_VERSION};
pub use sim::{sensor_view, step_world, EgoSetpoint, TraceRow, World, WorldState};

/// Simulation step in seconds.
pub const SIM_DT: f64 = 0.1;
/// World steps per 1 Hz decision.
pub const STEPS_PER_DECISION: usize = 10;
/// Decision interval in seconds.
pub const DECISION_DT: f64 = SIM_DT * STEPS_PER_DECISION as f64;
/// Collision rectangle width.
pub const VEHICLE_WIDTH: f64 = 2.0;
pub const DEFAULT_VEHICLE_LENGTH: f64 = 5.0;
pub const DEFAULT_LANE_WIDTH: f64 = 3.5;
/// Largest traffic population a scenario may carry.
pub const MAX_VEHICLES: usize = 80;
/// Id reserved for the ego vehicle.
pub const EGO_ID: u32 = 0;

/// Kinematic state of one vehicle. `s` is the front bumper position.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VehicleState {
    pub id: u32,
    pub lane_index: usize,
    pub s: f64,
    /// Lateral offset from the center of `lane_index`.
    pub d: f64,
    pub v: f64,
    pub a: f64,
    pub length: f64,
}

impl VehicleState {
    pub fn new(id: u32, lane_index: usize, s: f64, v: f64) -> Self {
        Self {
            id,
            lane_index,
            s,
            d: 0.0,
            v,
            a: 0.0,
            length: DEFAULT_VEHICLE_LENGTH,
        }
    }

    pub fn rear(&self) -> f64 {
        self.s - self.length
    }

    /// Lateral position measured from the center of lane 0.
    pub fn lateral(&self, lane_width: f64) -> f64 {
        self.lane_index as f64 * lane_width + self.d
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriverParams {
    /// Desired speed.
    pub v0: f64,
    /// Desired time headway.
    #[serde(rename = "T")]
    pub time_headway: f64,
    pub a_max: f64,
    pub b_comf: f64,
    pub s0: f64,
    pub delta: f64,
    pub lane_change_prob_per_s: f64,
    #[serde(default = "default_b_emergency")]
    pub b_emergency: f64,
}

fn default_b_emergency() -> f64 {
    8.0
}

impl Default for DriverParams {
    fn default() -> Self {
        Self {
            v0: 25.0,
            time_headway: 1.5,
            a_max: 1.5,
            b_comf: 2.0,
            s0: 2.0,
            delta: 4.0,
            lane_change_prob_per_s: 0.1,
            b_emergency: default_b_emergency(),
        }
    }
}

impl DriverParams {
    pub fn validate(&self) -> crate::Result<()> {
        let positive = [
            self.v0,
            self.time_headway,
            self.a_max,
            self.b_comf,
            self.s0,
            self.b_emergency,
        ];
        if positive.iter().any(|x| !(*x > 0.0) || !x.is_finite()) {
            return Err(crate::Error::InvalidArgument(
                "driver parameters must be positive".into(),
            ));
        }
        if !(self.delta >= 1.0) {
            return Err(crate::Error::InvalidArgument("delta must be >= 1".into()));
        }
        if !(0.0..=1.0).contains(&self.lane_change_prob_per_s) {
            return Err(crate::Error::InvalidArgument(
                "lane_change_prob_per_s must lie in [0, 1]".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioVehicle {
    pub state: VehicleState,
    pub driver: DriverParams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub format_version: u32,
    pub lane_count: usize,
    pub road_length: f64,
    #[serde(default = "default_lane_width")]
    pub lane_width: f64,
    pub vehicles: Vec<ScenarioVehicle>,
    pub ego_start: VehicleState,
    pub ego_desired_speed: f64,
    pub seed: u64,
    pub max_duration: f64,
}

fn default_lane_width() -> f64 {
    DEFAULT_LANE_WIDTH
}

impl Scenario {
    /// Checks the structural invariants of a scenario (lanes, overlap, speeds).
    pub fn validate(&self) -> crate::Result<()> {
        use crate::Error::InvalidArgument as Bad;
        if self.format_version != SCENARIO_FORMAT_VERSION {
            return Err(crate::Error::FormatVersion(self.format_version));
        }
        if self.lane_count == 0 || self.lane_count > 8 {
            return Err(Bad(format!("lane_count {} out of range", self.lane_count)));
        }
        if !(self.road_length > 0.0 && self.road_length.is_finite()) {
            return Err(Bad("road_length must be positive".into()));
        }
        if !(self.lane_width > VEHICLE_WIDTH && self.lane_width.is_finite()) {
            return Err(Bad("lane_width must exceed the vehicle width".into()));
        }
        if !(self.ego_desired_speed > 0.0 && self.ego_desired_speed.is_finite()) {
            return Err(Bad("ego_desired_speed must be positive".into()));
        }
        if !(self.max_duration >= 0.0 && self.max_duration.is_finite()) {
            return Err(Bad("max_duration must be non-negative".into()));
        }
        if self.vehicles.len() > MAX_VEHICLES {
            return Err(Bad(format!("at most {MAX_VEHICLES} vehicles")));
        }
        let mut all: Vec<&VehicleState> = self.vehicles.iter().map(|v| &v.state).collect();
        all.push(&self.ego_start);
        for v in &all {
            if v.lane_index >= self.lane_count {
                return Err(Bad(format!("vehicle {} on lane {}", v.id, v.lane_index)));
            }
            let finite = [v.s, v.d, v.v, v.a, v.length];
            if finite.iter().any(|x| !x.is_finite()) || v.v < 0.0 || !(v.length > 0.0) {
                return Err(Bad(format!("vehicle {} has invalid kinematics", v.id)));
            }
            if v.d.abs() > self.lane_width {
                return Err(Bad(format!("vehicle {} is off the road", v.id)));
            }
        }
        for sv in &self.vehicles {
            sv.driver.validate()?;
            if sv.state.id == EGO_ID {
                return Err(Bad("vehicle id 0 is reserved for the ego".into()));
            }
        }
        let mut ids: Vec<u32> = all.iter().map(|v| v.id).collect();
        ids.sort_unstable();
        ids.dedup();
        if ids.len() != all.len() {
            return Err(Bad("duplicate vehicle ids".into()));
        }
        for (i, a) in all.iter().enumerate() {
            for b in &all[i + 1..] {
                if a.lane_index == b.lane_index && a.rear() < b.s && b.rear() < a.s {
                    return Err(Bad(format!("vehicles {} and {} overlap", a.id, b.id)));
                }
            }
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> crate::Result<Self> {
        let scenario: Scenario = serde_json::from_str(text)?;
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }
}
