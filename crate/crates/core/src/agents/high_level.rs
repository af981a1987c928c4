use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{fallback_plan, ActivePlan, Agent, Candidate, Choice, DecisionInput, DecisionRecord};
use crate::learn::{Manoeuvre, RlState};
use crate::neural::DeepSetQNet;
use crate::trajectory::{plan_to_gap, EgoKinematics, GapBound, GapRegion, PlannerConfig, Trajectory};
use crate::world::{EgoSetpoint, VehicleState, World};
use crate::{Error, Result};

/// Fixed lane-change duration of the discrete agent, seconds.
pub const LANE_CHANGE_DURATION: f64 = 3.0;

/// Best feasible fixed-duration lane change onto `target_lane`, if any.
pub fn lane_change_plan(
    ego: &EgoKinematics,
    target_lane: usize,
    desired_speed: f64,
    view: &[VehicleState],
    cfg: &PlannerConfig,
) -> Result<Option<Trajectory>> {
    let cfg = PlannerConfig {
        durations: vec![LANE_CHANGE_DURATION],
        ..cfg.clone()
    };
    plan_to_gap(ego, &GapRegion::open(target_lane), desired_speed, view, &cfg)
}

/// The gap on the ego lane that currently holds the ego.
fn own_lane_region(ego: &EgoKinematics, view: &[VehicleState]) -> GapRegion {
    let on_lane = view.iter().filter(|v| v.lane_index == ego.lane_index);
    let follower = on_lane
        .clone()
        .filter(|v| v.s <= ego.s)
        .max_by(|a, b| a.s.total_cmp(&b.s));
    let leader = on_lane
        .filter(|v| v.s > ego.s)
        .min_by(|a, b| a.s.total_cmp(&b.s));
    GapRegion {
        lane: ego.lane_index,
        follower: follower.map(GapBound::from),
        leader: leader.map(GapBound::from),
    }
}

/// Argmax of the three-way head over the valid manoeuvres. Ties resolve in
/// keep, left, right order.
pub fn select_high_level(model: &DeepSetQNet, state: &RlState, valid: [bool; 3]) -> Result<(Manoeuvre, Vec<f64>)> {
    let q = model.forward(&state.dynamic, &state.static_features, &[])?;
    if q.len() != 3 {
        return Err(Error::Dimension {
            expected: 3,
            got: q.len(),
            context: "high-level head",
        });
    }
    let mask = masked(state, valid);
    let best = Manoeuvre::ALL
        .into_iter()
        .filter(|m| mask[m.index()])
        .fold(None::<Manoeuvre>, |acc, m| match acc {
            Some(b) if q[b.index()] >= q[m.index()] => Some(b),
            _ => Some(m),
        })
        .ok_or(Error::EmptyCandidates)?;
    Ok((best, q))
}

fn masked(state: &RlState, valid: [bool; 3]) -> [bool; 3] {
    [
        valid[0],
        valid[1] && state.static_features[1] == 1.0,
        valid[2] && state.static_features[2] == 1.0,
    ]
}

pub enum HighLevelPolicy {
    Learned(Box<DeepSetQNet>),
    /// Repeats the previous manoeuvre with probability `repeat`, otherwise uniform.
    PseudoRandom { rng: ChaCha8Rng, repeat: f64 },
}

/// Discrete keep/left/right agent with fixed-duration lane changes.
///
/// Lane changes are committed once started; keep-lane follows the best
/// own-lane plan and is re-decided every interval.
pub struct HighLevelAgent {
    name: String,
    policy: HighLevelPolicy,
    previous: Option<Manoeuvre>,
    committed_until: Option<f64>,
    plan: Option<ActivePlan>,
}

impl HighLevelAgent {
    pub fn new(name: impl Into<String>, policy: HighLevelPolicy) -> Self {
        Self {
            name: name.into(),
            policy,
            previous: None,
            committed_until: None,
            plan: None,
        }
    }

    pub fn learned(model: DeepSetQNet) -> Self {
        Self::new("high_level", HighLevelPolicy::Learned(Box::new(model)))
    }

    pub fn pseudo_random(rng: ChaCha8Rng, repeat: f64) -> Self {
        Self::new("high_level_collect", HighLevelPolicy::PseudoRandom { rng, repeat })
    }

    fn record(&self, time: f64) -> DecisionRecord {
        DecisionRecord {
            time,
            agent: self.name.clone(),
            candidates: Vec::new(),
            q_values: Vec::new(),
            chosen: None,
            selected: false,
            changed: false,
            fallback: false,
            reward: None,
        }
    }
}

fn manoeuvre_candidate(m: Manoeuvre, plan: Option<&Trajectory>) -> Candidate {
    Candidate {
        choice: Choice::Manoeuvre(m),
        features: None,
        mean_speed: plan.map(|p| p.mean_speed()),
    }
}

impl Agent for HighLevelAgent {
    fn name(&self) -> &str {
        &self.name
    }

    fn decide(&mut self, input: &DecisionInput) -> Result<DecisionRecord> {
        let mut record = self.record(input.time);
        if let (Some(until), Some(prev)) = (self.committed_until, self.previous) {
            if input.time < until - 1e-9 {
                record.candidates = vec![manoeuvre_candidate(prev, None)];
                record.chosen = Some(0);
                return Ok(record);
            }
        }
        self.committed_until = None;

        let ego = &input.ego;
        let cfg = &input.settings.planner;
        let keep = plan_to_gap(
            ego,
            &own_lane_region(ego, input.view),
            input.desired_speed,
            input.view,
            cfg,
        )?;
        let lane = ego.lane_index;
        let left = if lane + 1 < cfg.lane_count {
            lane_change_plan(ego, lane + 1, input.desired_speed, input.view, cfg)?
        } else {
            None
        };
        let right = if lane > 0 {
            lane_change_plan(ego, lane - 1, input.desired_speed, input.view, cfg)?
        } else {
            None
        };
        let plans = [keep, left, right];
        let valid = [true, plans[1].is_some(), plans[2].is_some()];
        let valid = masked(input.state, valid);

        let choice = match &mut self.policy {
            HighLevelPolicy::Learned(model) => {
                let (m, q) = select_high_level(model, input.state, valid)?;
                record.q_values = q;
                m
            }
            HighLevelPolicy::PseudoRandom { rng, repeat } => {
                let options: Vec<Manoeuvre> = Manoeuvre::ALL
                    .into_iter()
                    .filter(|m| valid[m.index()])
                    .collect();
                match self.previous {
                    Some(p) if valid[p.index()] && rng.gen_bool(*repeat) => p,
                    _ => options[rng.gen_range(0..options.len())],
                }
            }
        };

        for m in Manoeuvre::ALL {
            if valid[m.index()] {
                record.candidates.push(manoeuvre_candidate(m, plans[m.index()].as_ref()));
            }
        }
        record.chosen = record
            .candidates
            .iter()
            .position(|c| c.choice == Choice::Manoeuvre(choice));
        record.selected = true;
        record.changed = self.previous != Some(choice);
        self.previous = Some(choice);

        let trajectory = match &plans[choice.index()] {
            Some(t) => t.clone(),
            None => {
                record.fallback = true;
                fallback_plan(ego, input.view, input.settings)
            }
        };
        if choice != Manoeuvre::Keep {
            self.committed_until = Some(input.time + LANE_CHANGE_DURATION);
        }
        self.plan = Some(ActivePlan {
            trajectory,
            start_time: input.time,
        });
        Ok(record)
    }

    fn setpoint(&mut self, world: &World, t: f64) -> EgoSetpoint {
        match &self.plan {
            Some(p) => p.setpoint(t),
            None => world.ego_setpoint(),
        }
    }
}
