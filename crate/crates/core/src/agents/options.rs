use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{gap_candidates, fallback_plan, ActivePlan, Agent, DecisionInput, DecisionRecord};
use crate::gaps::{enumerate_gaps, reachable_gaps, Gap, GapContext, GapId, GapSet};
use crate::harness::{reward, RewardParams};
use crate::learn::RlState;
use crate::neural::DeepSetQNet;
use crate::trajectory::Trajectory;
use crate::world::{EgoSetpoint, VehicleState, World};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptionStatus {
    Running,
    Reached,
    Interrupted,
}

/// The option "reach gap `gap`" while it runs.
#[derive(Debug, Clone, PartialEq)]
pub struct OptionExecution {
    pub gap: GapId,
    pub trajectory: Trajectory,
    pub start_time: f64,
    pub status: OptionStatus,
}

/// Advances a running option at a decision instant.
///
/// `gaps` are the gaps enumerated at `time` and `gapset` their reachable subset.
/// The option is reached when the ego sits inside the gap's current bounds,
/// interrupted when the gap is no longer reachable, and otherwise continues on
/// a freshly planned trajectory.
pub fn step_option(
    exec: &OptionExecution,
    gaps: &[Gap],
    gapset: &GapSet,
    ego: &VehicleState,
    time: f64,
) -> OptionExecution {
    let mut next = exec.clone();
    if gaps.iter().any(|g| g.id == exec.gap && g.holds(ego)) {
        next.status = OptionStatus::Reached;
        return next;
    }
    match gapset.find(exec.gap) {
        Some(rg) => {
            next.trajectory = rg.trajectory.clone();
            next.start_time = time;
            next.status = OptionStatus::Running;
        }
        None => next.status = OptionStatus::Interrupted,
    }
    next
}

fn tie_key(gapset: &GapSet, i: usize) -> (u8, f64) {
    let f = &gapset.gaps[i].gap.features;
    (f.af, f.d_rel.abs())
}

/// Argmax of the learned Q over the candidates, with the set encoding computed once.
///
/// Ties go to the previously selected gap, then to the nearest gap.
pub fn select_option_learned(model: &DeepSetQNet, state: &RlState, gapset: &GapSet) -> Result<(usize, Vec<f64>)> {
    if gapset.is_empty() {
        return Err(Error::EmptyCandidates);
    }
    let encoding = model.encode(&state.dynamic);
    let qs = gapset
        .gaps
        .iter()
        .map(|g| {
            Ok(model.head(
                &encoding,
                &state.static_features,
                &g.gap.features.network_input(),
            )?[0])
        })
        .collect::<Result<Vec<f64>>>()?;
    let mut best = 0;
    for i in 1..qs.len() {
        let better = qs[i] > qs[best]
            || (qs[i] == qs[best] && {
                let (a, b) = (tie_key(gapset, i), tie_key(gapset, best));
                a.0 < b.0 || (a.0 == b.0 && a.1 < b.1)
            });
        if better {
            best = i;
        }
    }
    Ok((best, qs))
}

pub fn select_random(gapset: &GapSet, rng: &mut ChaCha8Rng) -> Result<usize> {
    if gapset.is_empty() {
        return Err(Error::EmptyCandidates);
    }
    Ok(rng.gen_range(0..gapset.len()))
}

/// Highest one-step reward at the mean speed of each gap's best plan, charging
/// the action-change penalty to every gap but the current one.
///
/// Ties keep the current gap, then prefer the faster plan.
pub fn select_greedy(gapset: &GapSet, desired_speed: f64, change_penalty: f64) -> Result<usize> {
    if gapset.is_empty() {
        return Err(Error::EmptyCandidates);
    }
    let params = RewardParams {
        desired_speed,
        change_penalty,
    };
    let key = |i: usize| {
        let g = &gapset.gaps[i];
        let v = g.trajectory.mean_speed().max(0.0);
        let changed = g.gap.features.af == 1;
        (reward(v, &params, changed), g.gap.features.af, v)
    };
    let mut best = 0;
    for i in 1..gapset.len() {
        let (a, b) = (key(i), key(best));
        let better = a.0 > b.0 || (a.0 == b.0 && (a.1 < b.1 || (a.1 == b.1 && a.2 > b.2)));
        if better {
            best = i;
        }
    }
    Ok(best)
}

pub enum Selector {
    Learned(Box<DeepSetQNet>),
    Random(ChaCha8Rng),
    Greedy,
}

/// Gap-selecting agent: the selector picks a gap whenever the running option ends.
pub struct OptionAgent {
    name: String,
    selector: Selector,
    exec: Option<OptionExecution>,
    previous: Option<GapId>,
    plan: Option<ActivePlan>,
}

impl OptionAgent {
    pub fn new(name: impl Into<String>, selector: Selector) -> Self {
        Self {
            name: name.into(),
            selector,
            exec: None,
            previous: None,
            plan: None,
        }
    }

    pub fn learned(model: DeepSetQNet) -> Self {
        Self::new("options", Selector::Learned(Box::new(model)))
    }

    pub fn random(rng: ChaCha8Rng) -> Self {
        Self::new("random", Selector::Random(rng))
    }

    pub fn greedy() -> Self {
        Self::new("greedy", Selector::Greedy)
    }

    pub fn execution(&self) -> Option<&OptionExecution> {
        self.exec.as_ref()
    }

    pub fn current_plan(&self) -> Option<&Trajectory> {
        self.plan.as_ref().map(|p| &p.trajectory)
    }
}

impl Agent for OptionAgent {
    fn name(&self) -> &str {
        &self.name
    }

    fn decide(&mut self, input: &DecisionInput) -> Result<DecisionRecord> {
        let ctx = GapContext {
            sensor_range: input.settings.sensor_range,
            desired_speed: input.desired_speed,
            lane_count: input.world.lane_count(),
        };
        let gaps = enumerate_gaps(input.view, &input.ego_vehicle, &ctx, self.previous);
        let gapset = reachable_gaps(
            &gaps,
            &input.ego,
            input.view,
            input.desired_speed,
            &input.settings.planner,
            input.time,
        )?;
        let mut record = DecisionRecord {
            time: input.time,
            agent: self.name.clone(),
            candidates: gap_candidates(&gapset),
            q_values: Vec::new(),
            chosen: None,
            selected: false,
            changed: false,
            fallback: false,
            reward: None,
        };

        let continued = self
            .exec
            .as_ref()
            .map(|e| step_option(e, &gaps, &gapset, &input.ego_vehicle, input.time))
            .filter(|e| e.status == OptionStatus::Running);
        let exec = match continued {
            Some(e) => e,
            None => {
                if gapset.is_empty() {
                    self.exec = None;
                    record.fallback = true;
                    record.selected = true;
                    self.plan = Some(ActivePlan {
                        trajectory: fallback_plan(&input.ego, input.view, input.settings),
                        start_time: input.time,
                    });
                    return Ok(record);
                }
                let idx = match &mut self.selector {
                    Selector::Learned(model) => {
                        let (i, qs) = select_option_learned(model, input.state, &gapset)?;
                        record.q_values = qs;
                        i
                    }
                    Selector::Random(rng) => select_random(&gapset, rng)?,
                    Selector::Greedy => select_greedy(
                        &gapset,
                        input.desired_speed,
                        input.settings.change_penalty,
                    )?,
                };
                record.selected = true;
                let rg = &gapset.gaps[idx];
                OptionExecution {
                    gap: rg.gap.id,
                    trajectory: rg.trajectory.clone(),
                    start_time: input.time,
                    status: OptionStatus::Running,
                }
            }
        };
        record.chosen = gapset.gaps.iter().position(|g| g.gap.id == exec.gap);
        record.changed = self.previous != Some(exec.gap);
        self.previous = Some(exec.gap);
        self.plan = Some(ActivePlan {
            trajectory: exec.trajectory.clone(),
            start_time: input.time,
        });
        self.exec = Some(exec);
        Ok(record)
    }

    fn setpoint(&mut self, world: &World, t: f64) -> EgoSetpoint {
        match &self.plan {
            Some(p) => p.setpoint(t),
            None => world.ego_setpoint(),
        }
    }
}
