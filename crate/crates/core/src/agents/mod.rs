//! Decision policies and option execution.
//!
//! Every agent is queried once per decision interval through [`Agent::decide`]
//! and then once per simulation step for the ego setpoint.

mod high_level;
mod idm_agent;
mod options;

use serde::{Deserialize, Serialize};

use crate::gaps::{GapFeatures, GapId, DEFAULT_SENSOR_RANGE};
use crate::learn::{Manoeuvre, RlState};
use crate::trajectory::{braking_trajectory, EgoKinematics, PlannerConfig, Trajectory};
use crate::world::{EgoSetpoint, VehicleState, World, DECISION_DT, VEHICLE_WIDTH};
use crate::Result;

pub use high_level::{lane_change_plan, select_high_level, HighLevelAgent, LANE_CHANGE_DURATION};
pub use idm_agent::{select_idm, IdmAgent, IdmCommand};
pub use options::{
    select_greedy, select_option_learned, select_random, step_option, OptionAgent,
    OptionExecution, OptionStatus, Selector,
};

fn default_emergency_decel() -> f64 {
    8.0
}

/// Settings shared by every agent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriveSettings {
    pub sensor_range: f64,
    pub planner: PlannerConfig,
    /// Deceleration of the keep-lane fallback when nothing is reachable.
    pub fallback_decel: f64,
    /// Upper bound on the fallback deceleration when the comfortable rate is not enough.
    #[serde(default = "default_emergency_decel")]
    pub emergency_decel: f64,
    /// Action-change penalty the greedy score applies to a switch.
    pub change_penalty: f64,
}

impl Default for DriveSettings {
    fn default() -> Self {
        Self {
            sensor_range: DEFAULT_SENSOR_RANGE,
            planner: PlannerConfig::default(),
            fallback_decel: 2.0,
            emergency_decel: default_emergency_decel(),
            change_penalty: -0.01,
        }
    }
}

/// Everything an agent sees at a decision instant.
pub struct DecisionInput<'a> {
    pub time: f64,
    pub world: &'a World,
    /// Sensed surrounding vehicles.
    pub view: &'a [VehicleState],
    pub ego: EgoKinematics,
    pub ego_vehicle: VehicleState,
    pub state: &'a RlState,
    pub desired_speed: f64,
    pub settings: &'a DriveSettings,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "type", content = "value")]
pub enum Choice {
    Gap(GapId),
    Manoeuvre(Manoeuvre),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub choice: Choice,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub features: Option<GapFeatures>,
    /// Mean speed of the plan attached to the candidate, if any.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean_speed: Option<f64>,
}

/// Audit record of one decision.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionRecord {
    pub time: f64,
    pub agent: String,
    pub candidates: Vec<Candidate>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub q_values: Vec<f64>,
    /// Index into `candidates`; `None` when the fallback ran.
    pub chosen: Option<usize>,
    /// The policy was asked for a fresh choice at this decision.
    pub selected: bool,
    /// The chosen action differs from the one chosen at the previous decision.
    pub changed: bool,
    pub fallback: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reward: Option<f64>,
}

impl DecisionRecord {
    pub fn chosen_candidate(&self) -> Option<&Candidate> {
        self.chosen.and_then(|i| self.candidates.get(i))
    }

    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("record serialization cannot fail")
    }
}

pub trait Agent {
    fn name(&self) -> &str;

    /// Called at every decision instant, before the interval's setpoints.
    fn decide(&mut self, input: &DecisionInput) -> Result<DecisionRecord>;

    /// Ego setpoint for absolute time `t` (the end of the step being simulated).
    fn setpoint(&mut self, world: &World, t: f64) -> EgoSetpoint;
}

/// A plan being followed from `start_time`.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct ActivePlan {
    pub trajectory: Trajectory,
    pub start_time: f64,
}

impl ActivePlan {
    pub fn setpoint(&self, t: f64) -> EgoSetpoint {
        self.trajectory.setpoint_at(t - self.start_time)
    }
}

/// Standstill distance the fallback keeps to the vehicle ahead.
const FALLBACK_MARGIN: f64 = 1.0;
/// The fallback stops braking once this much slower than the vehicle ahead.
const FALLBACK_SPEED_MARGIN: f64 = 2.0;

/// Keep-lane braking for one decision interval.
///
/// Without a vehicle ahead this is the comfortable rate. Behind a vehicle the
/// comfortable rate only applies until the ego is `FALLBACK_SPEED_MARGIN`
/// slower than it, and rises to whatever matches its speed (predicted at
/// constant velocity) before reaching it, capped at the emergency rate.
pub fn fallback_plan(ego: &EgoKinematics, view: &[VehicleState], settings: &DriveSettings) -> Trajectory {
    let w = settings.planner.lane_width;
    let lane = (ego.lateral / w).round().max(0.0) as usize;
    let leader = view
        .iter()
        .filter(|v| v.s > ego.s)
        .filter(|v| v.lane_index == lane || (v.lateral(w) - ego.lateral).abs() < VEHICLE_WIDTH)
        .min_by(|a, b| a.rear().total_cmp(&b.rear()));
    let mut decel = settings.fallback_decel;
    if let Some(l) = leader {
        let excess = ego.v - (l.v - FALLBACK_SPEED_MARGIN);
        decel = decel.min((excess / DECISION_DT).max(0.0));
        let closing = ego.v - l.v;
        if closing > 0.0 {
            let room = (l.rear() - ego.s - FALLBACK_MARGIN).max(0.1);
            decel = decel.max(closing * closing / (2.0 * room));
        }
    }
    let decel = decel.min(settings.emergency_decel.max(settings.fallback_decel));
    braking_trajectory(ego, decel, DECISION_DT, &settings.planner)
}

/// Candidate list for a gap set, in gap order.
pub(crate) fn gap_candidates(gapset: &crate::gaps::GapSet) -> Vec<Candidate> {
    gapset
        .gaps
        .iter()
        .map(|g| Candidate {
            choice: Choice::Gap(g.gap.id),
            features: Some(g.gap.features),
            mean_speed: Some(g.trajectory.mean_speed()),
        })
        .collect()
}
