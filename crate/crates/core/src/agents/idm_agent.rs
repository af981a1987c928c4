use serde::{Deserialize, Serialize};

use super::{Agent, Candidate, Choice, DecisionInput, DecisionRecord};
use crate::learn::Manoeuvre;
use crate::trajectory::{fit_quintic, QuinticPoly};
use crate::world::{idm_acceleration, DriverParams, EgoSetpoint, VehicleState, World};
use crate::Result;

/// Acceleration advantage an adjacent lane needs before the agent moves over.
const LANE_GAIN: f64 = 0.1;
const LATERAL_DURATION: f64 = 3.0;

/// Target lane and current-lane acceleration of the IDM driver.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IdmCommand {
    pub acceleration: f64,
    pub target_lane: usize,
}

/// IDM driver parameters with few internal limits: desired speed as given,
/// one-second headway and the planner's acceleration bound.
pub fn relaxed_driver(desired_speed: f64) -> DriverParams {
    DriverParams {
        v0: desired_speed,
        time_headway: 1.0,
        a_max: 3.0,
        b_comf: 3.0,
        s0: 2.0,
        delta: 4.0,
        lane_change_prob_per_s: 0.0,
        ..DriverParams::default()
    }
}

fn nearest_on_lane<'a>(others: &'a [VehicleState], lane: usize, s: f64, ahead: bool) -> Option<&'a VehicleState> {
    let on_lane = others.iter().filter(|v| v.lane_index == lane);
    if ahead {
        on_lane.filter(|v| v.s > s).min_by(|a, b| a.s.total_cmp(&b.s))
    } else {
        on_lane.filter(|v| v.s <= s).max_by(|a, b| a.s.total_cmp(&b.s))
    }
}

/// Ego acceleration behind the nearest leader on `lane`.
fn lane_acceleration(ego: &VehicleState, others: &[VehicleState], lane: usize, params: &DriverParams) -> f64 {
    let mut probe = *ego;
    probe.lane_index = lane;
    idm_acceleration(&probe, nearest_on_lane(others, lane, ego.s, true), params).value()
}

/// IDM longitudinal control plus an eager lane change: move to an adjacent lane
/// whenever its IDM acceleration beats the current lane's and the insertion is
/// IDM-safe for both the ego and the new follower.
pub fn select_idm(ego: &VehicleState, others: &[VehicleState], lane_count: usize, params: &DriverParams) -> IdmCommand {
    let current = lane_acceleration(ego, others, ego.lane_index, params);
    let mut best = IdmCommand {
        acceleration: current,
        target_lane: ego.lane_index,
    };
    let adjacent = [ego.lane_index.checked_sub(1), Some(ego.lane_index + 1)];
    for lane in adjacent.into_iter().flatten().filter(|l| *l < lane_count) {
        let leader = nearest_on_lane(others, lane, ego.s, true);
        let follower = nearest_on_lane(others, lane, ego.s, false);
        let overlaps = leader.map_or(false, |l| l.rear() <= ego.s)
            || follower.map_or(false, |f| f.s >= ego.rear());
        if overlaps {
            continue;
        }
        let gain = lane_acceleration(ego, others, lane, params);
        let mut placed = *ego;
        placed.lane_index = lane;
        let follower_ok = follower.map_or(true, |f| {
            idm_acceleration(f, Some(&placed), params).value() >= -params.b_comf
        });
        if gain >= -params.b_comf && follower_ok && gain > best.acceleration + LANE_GAIN {
            best = IdmCommand {
                acceleration: gain,
                target_lane: lane,
            };
        }
    }
    best.acceleration = current;
    best
}

#[derive(Debug, Clone, PartialEq)]
struct LaneChange {
    target_lane: usize,
    lateral: QuinticPoly,
    start_time: f64,
}

/// Baseline agent driven entirely by the IDM with eager lane changes.
pub struct IdmAgent {
    params: Option<DriverParams>,
    lane_change: Option<LaneChange>,
    previous: Option<Manoeuvre>,
}

impl IdmAgent {
    pub fn new() -> Self {
        Self {
            params: None,
            lane_change: None,
            previous: None,
        }
    }

    pub fn with_params(params: DriverParams) -> Self {
        Self {
            params: Some(params),
            ..Self::new()
        }
    }
}

impl Default for IdmAgent {
    fn default() -> Self {
        Self::new()
    }
}

impl Agent for IdmAgent {
    fn name(&self) -> &str {
        "idm"
    }

    fn decide(&mut self, input: &DecisionInput) -> Result<DecisionRecord> {
        let params = *self
            .params
            .get_or_insert_with(|| relaxed_driver(input.desired_speed));
        let ego = &input.ego_vehicle;
        let mut record = DecisionRecord {
            time: input.time,
            agent: "idm".into(),
            candidates: vec![Candidate {
                choice: Choice::Manoeuvre(Manoeuvre::Keep),
                features: None,
                mean_speed: None,
            }],
            q_values: Vec::new(),
            chosen: Some(0),
            selected: true,
            changed: false,
            fallback: false,
            reward: None,
        };
        if let Some(lc) = &self.lane_change {
            if input.time < lc.start_time + LATERAL_DURATION - 1e-9 {
                let m = self.previous.unwrap_or(Manoeuvre::Keep);
                record.candidates[0].choice = Choice::Manoeuvre(m);
                record.selected = false;
                return Ok(record);
            }
            self.lane_change = None;
        }
        let others = input.world.state().vehicles.as_slice();
        let cmd = select_idm(ego, others, input.world.lane_count(), &params);
        let choice = if cmd.target_lane > ego.lane_index {
            Manoeuvre::Left
        } else if cmd.target_lane < ego.lane_index {
            Manoeuvre::Right
        } else {
            Manoeuvre::Keep
        };
        if choice != Manoeuvre::Keep {
            let w = input.world.lane_width();
            let lateral = fit_quintic(
                (input.ego.lateral, input.ego.lateral_v, input.ego.lateral_a),
                (cmd.target_lane as f64 * w, 0.0, 0.0),
                LATERAL_DURATION,
            )?;
            self.lane_change = Some(LaneChange {
                target_lane: cmd.target_lane,
                lateral,
                start_time: input.time,
            });
            record.candidates.push(Candidate {
                choice: Choice::Manoeuvre(choice),
                features: None,
                mean_speed: None,
            });
            record.chosen = Some(1);
        }
        record.changed = self.previous != Some(choice);
        self.previous = Some(choice);
        Ok(record)
    }

    fn setpoint(&mut self, world: &World, t: f64) -> EgoSetpoint {
        let ego = *world.ego();
        let params = self
            .params
            .unwrap_or_else(|| relaxed_driver(ego.v.max(1.0)));
        let others = world.state().vehicles.as_slice();
        let mut a = lane_acceleration(&ego, others, ego.lane_index, &params);
        let w = world.lane_width();
        let (lateral, lateral_v, lateral_a) = match &self.lane_change {
            Some(lc) => {
                a = a.min(lane_acceleration(&ego, others, lc.target_lane, &params));
                let s = lc.lateral.sample_unchecked((t - lc.start_time).clamp(0.0, LATERAL_DURATION));
                (s.p, s.v, s.a)
            }
            None => (ego.lane_index as f64 * w, 0.0, 0.0),
        };
        let dt = world.dt();
        let (s, v) = if ego.v + a * dt < 0.0 {
            let stop = if a < 0.0 { -ego.v * ego.v / (2.0 * a) } else { 0.0 };
            (ego.s + stop, 0.0)
        } else {
            (ego.s + ego.v * dt + 0.5 * a * dt * dt, ego.v + a * dt)
        };
        EgoSetpoint {
            s,
            lateral,
            v,
            a,
            lateral_v,
            lateral_a,
        }
    }
}
