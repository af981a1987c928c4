use serde::{Deserialize, Serialize};

use crate::world::{VehicleState, VEHICLE_WIDTH};

/// Physical and headway limits every executed trajectory must respect.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SafetyParams {
    pub ttc_min: f64,
    pub thw_min: f64,
    pub a_min: f64,
    pub a_max: f64,
    pub v_max: f64,
    pub horizon: f64,
}

impl Default for SafetyParams {
    fn default() -> Self {
        Self {
            ttc_min: 2.0,
            thw_min: 1.0,
            a_min: -4.0,
            a_max: 3.0,
            v_max: 36.0,
            horizon: 6.0,
        }
    }
}

impl SafetyParams {
    pub fn validate(&self) -> crate::Result<()> {
        if self.ttc_min > 0.0
            && self.thw_min > 0.0
            && self.a_min < 0.0
            && self.a_max > 0.0
            && self.v_max > 0.0
            && self.horizon > 0.0
        {
            Ok(())
        } else {
            Err(crate::Error::InvalidArgument(
                "safety parameters out of range".into(),
            ))
        }
    }
}

/// Predicted front position of `vehicle` after `t` seconds at constant speed.
pub fn predict_constant_velocity(vehicle: &VehicleState, t: f64) -> f64 {
    vehicle.s + vehicle.v * t
}

/// Orders two `(position, speed)` pairs into (follower, leader) by position.
#[inline]
fn follower_leader(host: (f64, f64), reference: (f64, f64)) -> ((f64, f64), (f64, f64)) {
    if host.0 <= reference.0 {
        (host, reference)
    } else {
        (reference, host)
    }
}

/// Time to collision between two `(position, speed)` pairs on one lane.
/// Infinite unless the follower is strictly faster than the leader.
#[inline]
pub fn ttc(host: (f64, f64), reference: (f64, f64)) -> f64 {
    let (f, l) = follower_leader(host, reference);
    let closing = f.1 - l.1;
    if closing <= 0.0 {
        f64::INFINITY
    } else {
        (host.0 - reference.0).abs() / closing
    }
}

/// Time headway of whichever pair member follows. Infinite for a stationary follower.
#[inline]
pub fn thw(host: (f64, f64), reference: (f64, f64)) -> f64 {
    let (f, _) = follower_leader(host, reference);
    if f.1 <= 0.0 {
        f64::INFINITY
    } else {
        (host.0 - reference.0).abs() / f.1
    }
}

/// Which constraint a trajectory broke first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Violation {
    Speed,
    Acceleration,
    Ttc,
    Thw,
    Overlap,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum Feasibility {
    Feasible,
    Infeasible { reason: Violation, time: f64 },
    /// Candidate was never checked (lazy planning path).
    Unchecked,
}

impl Feasibility {
    pub fn is_feasible(&self) -> bool {
        matches!(self, Feasibility::Feasible)
    }

    pub fn reason(&self) -> Option<Violation> {
        match self {
            Feasibility::Infeasible { reason, .. } => Some(*reason),
            _ => None,
        }
    }
}

/// Ego kinematics at one sample of a plan.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EgoSample {
    pub t: f64,
    pub s: f64,
    pub v: f64,
    pub a: f64,
    pub lateral: f64,
}

/// Headway/ttc between the ego and one other vehicle, both on the lane being checked.
#[inline]
pub(crate) fn pair_gates(ego_front: f64, ego_len: f64, ego_v: f64, other_front: f64, other: &VehicleState) -> (f64, f64) {
    // bumper points so |host - reference| is the bumper gap
    let (host, reference) = if ego_front >= other_front {
        ((ego_front - ego_len, ego_v), (other_front, other.v))
    } else {
        ((ego_front, ego_v), (other_front - other.length, other.v))
    };
    (ttc(host, reference), thw(host, reference))
}

/// Checks one ego sample against limits and every relevant constant-velocity prediction.
pub fn check_sample(
    sample: &EgoSample,
    ego_length: f64,
    relevant: &[VehicleState],
    safety: &SafetyParams,
    lane_width: f64,
    lane_count: usize,
) -> Option<Violation> {
    const EPS: f64 = 1e-9;
    if sample.v < -EPS || sample.v > safety.v_max + EPS {
        return Some(Violation::Speed);
    }
    if sample.a < safety.a_min - EPS || sample.a > safety.a_max + EPS {
        return Some(Violation::Acceleration);
    }
    let lane = (sample.lateral / lane_width)
        .round()
        .clamp(0.0, lane_count.saturating_sub(1) as f64) as usize;
    let mut worst: Option<Violation> = None;
    for other in relevant {
        if other.lane_index != lane {
            continue;
        }
        let front = predict_constant_velocity(other, sample.t);
        let (ttc_v, thw_v) = pair_gates(sample.s, ego_length, sample.v, front, other);
        if ttc_v < safety.ttc_min {
            return Some(Violation::Ttc);
        }
        if thw_v < safety.thw_min {
            worst = Some(Violation::Thw);
        }
    }
    if worst.is_some() {
        return worst;
    }
    for other in relevant {
        let front = predict_constant_velocity(other, sample.t);
        let dy = (sample.lateral - other.lateral(lane_width)).abs();
        if dy < VEHICLE_WIDTH && sample.s - ego_length < front && front - other.length < sample.s {
            return Some(Violation::Overlap);
        }
    }
    None
}
