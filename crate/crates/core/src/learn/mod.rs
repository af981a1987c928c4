//! Offline Q-learning over a fixed transition dataset.

mod dataset;
mod train;

use serde::{Deserialize, Serialize};

use crate::gaps::{GapFeatures, GapId};
use crate::neural::DYNAMIC_DIM;
use crate::{Error, Result};

pub use dataset::{parse_transition, read_dataset, write_dataset, Dataset, DATASET_FORMAT_VERSION};
pub use train::{
    architecture_for, compute_targets, init_learner, train, train_files, train_step, Learner, LogRow, TrainOutcome,
    LOG_CSV_HEADER,
};

/// Observation fed to the networks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RlState {
    /// One `(d_rel, v_rel, lane_rel)` row per sensed vehicle.
    pub dynamic: Vec<[f64; DYNAMIC_DIM]>,
    /// `(v / v_des, ll_valid, rl_valid)`.
    #[serde(rename = "static")]
    pub static_features: [f64; 3],
}

impl RlState {
    pub fn validate(&self) -> Result<()> {
        for row in &self.dynamic {
            if row.iter().any(|x| !x.is_finite()) || row[0].abs() > 1.0 + 1e-9 {
                return Err(Error::InvalidArgument(format!("bad dynamic row {row:?}")));
            }
        }
        let [v, ll, rl] = self.static_features;
        if !v.is_finite() || v < 0.0 || !(ll == 0.0 || ll == 1.0) || !(rl == 0.0 || rl == 1.0) {
            return Err(Error::InvalidArgument(format!(
                "bad static features {:?}",
                self.static_features
            )));
        }
        Ok(())
    }
}

/// Discrete high-level manoeuvres; the index is the network output slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Manoeuvre {
    Keep = 0,
    Left = 1,
    Right = 2,
}

impl Manoeuvre {
    pub const ALL: [Manoeuvre; 3] = [Manoeuvre::Keep, Manoeuvre::Left, Manoeuvre::Right];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Action {
    Gap {
        id: Option<GapId>,
        features: GapFeatures,
    },
    Manoeuvre(Manoeuvre),
}

/// One logged decision step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub format_version: u32,
    pub state: RlState,
    pub action: Action,
    pub reward: f64,
    pub next_state: RlState,
    /// Reachable gaps at the next decision (gap datasets).
    #[serde(default)]
    pub next_gap_candidates: Vec<GapFeatures>,
    /// Unmasked manoeuvres at the next decision (high-level datasets).
    #[serde(default)]
    pub next_valid_actions: Vec<Manoeuvre>,
    /// Seconds between this decision and the next.
    pub duration: f64,
    pub terminal: bool,
}

impl Transition {
    pub fn is_gap(&self) -> bool {
        matches!(self.action, Action::Gap { .. })
    }

    pub fn validate(&self) -> Result<()> {
        if self.format_version != DATASET_FORMAT_VERSION {
            return Err(Error::FormatVersion(self.format_version));
        }
        self.state.validate()?;
        self.next_state.validate()?;
        if !self.reward.is_finite() {
            return Err(Error::InvalidArgument("reward is not finite".into()));
        }
        if !(self.duration > 0.0 && self.duration.is_finite()) {
            return Err(Error::InvalidArgument("duration must be positive".into()));
        }
        let finite = |g: &GapFeatures| {
            [g.d_rel, g.v_rel, g.len].iter().all(|x| x.is_finite()) && g.af <= 1
        };
        match &self.action {
            Action::Gap { features, .. } => {
                if !finite(features) || !self.next_gap_candidates.iter().all(finite) {
                    return Err(Error::InvalidArgument("gap features not finite".into()));
                }
                if !self.terminal && self.next_gap_candidates.is_empty() {
                    return Err(Error::InvalidArgument(
                        "non-terminal gap transition without candidates".into(),
                    ));
                }
                if !self.next_valid_actions.is_empty() {
                    return Err(Error::InvalidArgument(
                        "gap transition carries manoeuvre candidates".into(),
                    ));
                }
            }
            Action::Manoeuvre(_) => {
                if !self.terminal && self.next_valid_actions.is_empty() {
                    return Err(Error::InvalidArgument(
                        "non-terminal manoeuvre transition without valid actions".into(),
                    ));
                }
                if !self.next_gap_candidates.is_empty() {
                    return Err(Error::InvalidArgument(
                        "manoeuvre transition carries gap candidates".into(),
                    ));
                }
            }
        }
        Ok(())
    }
}

/// Training configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hyperparams {
    pub training_steps: u64,
    pub batch_size: usize,
    pub gamma: f64,
    pub tau: f64,
    pub learning_rate: f64,
    /// Discount by `gamma^duration` instead of once per decision.
    pub discount_by_duration: bool,
    pub log_every: u64,
    /// 0 disables checkpoints.
    pub checkpoint_every: u64,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Self::full_scale()
    }
}

impl Hyperparams {
    /// 75k steps, batch 64, gamma 0.99, tau 1e-4, learning rate 1e-4.
    pub fn full_scale() -> Self {
        Self {
            training_steps: 75_000,
            batch_size: 64,
            gamma: 0.99,
            tau: 1e-4,
            learning_rate: 1e-4,
            discount_by_duration: false,
            log_every: 100,
            checkpoint_every: 10_000,
        }
    }

    /// 10k steps with tau and learning rate scaled so `tau * steps` and
    /// `lr * steps` match the long run.
    pub fn desk_scale() -> Self {
        Self {
            training_steps: 10_000,
            tau: 7.5e-4,
            learning_rate: 7.5e-4,
            checkpoint_every: 0,
            ..Self::full_scale()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(Error::InvalidArgument(format!("gamma {} outside [0, 1]", self.gamma)));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidArgument("batch_size must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.tau) {
            return Err(Error::InvalidArgument(format!("tau {} outside [0, 1]", self.tau)));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::InvalidArgument("learning rate must be positive".into()));
        }
        Ok(())
    }
}

impl RlState {
    /// Observation of `ego` given the sensed vehicles `view`.
    pub fn observe(
        ego: &crate::world::VehicleState,
        view: &[crate::world::VehicleState],
        lane_count: usize,
        desired_speed: f64,
        sensor_range: f64,
    ) -> Self {
        let dynamic = view
            .iter()
            .filter(|v| (v.s - ego.s).abs() <= sensor_range)
            .map(|v| {
                [
                    (v.s - ego.s) / sensor_range,
                    (v.v - ego.v) / desired_speed,
                    v.lane_index as f64 - ego.lane_index as f64,
                ]
            })
            .collect();
        let left = ego.lane_index + 1 < lane_count;
        let right = ego.lane_index > 0;
        Self {
            dynamic,
            static_features: [
                ego.v / desired_speed,
                f64::from(u8::from(left)),
                f64::from(u8::from(right)),
            ],
        }
    }
}
