use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Action-change penalty used throughout.
pub const DEFAULT_CHANGE_PENALTY: f64 = -0.01;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardParams {
    pub desired_speed: f64,
    /// Added when the chosen action differs from the previous one; never positive.
    pub change_penalty: f64,
}

impl RewardParams {
    pub fn new(desired_speed: f64) -> Self {
        Self {
            desired_speed,
            change_penalty: DEFAULT_CHANGE_PENALTY,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.desired_speed > 0.0 && self.desired_speed.is_finite()) {
            return Err(Error::InvalidArgument("desired speed must be positive".into()));
        }
        if !(self.change_penalty <= 0.0) {
            return Err(Error::InvalidArgument("change penalty must be <= 0".into()));
        }
        Ok(())
    }
}

/// Per-decision reward: `1 - |v - v_des| / v_des` below the desired speed, `1` at
/// or above it, plus the change penalty when the action changed.
pub fn reward(speed: f64, params: &RewardParams, action_changed: bool) -> f64 {
    let penalty = if action_changed {
        params.change_penalty
    } else {
        0.0
    };
    let base = if speed < params.desired_speed {
        1.0 - (speed - params.desired_speed).abs() / params.desired_speed
    } else {
        1.0
    };
    base + penalty
}
