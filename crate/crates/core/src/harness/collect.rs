use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::episode::{EpisodeRunner, Observation};
use crate::agents::{Agent, Choice, DecisionRecord, DriveSettings, HighLevelAgent, OptionAgent};
use crate::gaps::GapFeatures;
use crate::learn::{write_dataset, Action, Manoeuvre, Transition, DATASET_FORMAT_VERSION};
use crate::world::{generate_random_scenario, ScenarioConfig};
use crate::{Error, Result};

const AGENT_SALT: u64 = 0xa11c_e5ee_d000_0003;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CollectKind {
    /// Uniform choice among reachable gaps whenever an option ends.
    RandomOptions,
    /// Keep/left/right with a bias toward repeating the previous manoeuvre.
    PseudoRandomHighLevel,
}

/// How the per-second rewards inside one transition are combined.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RewardAggregation {
    Mean,
    Sum,
}

impl RewardAggregation {
    pub fn apply(self, rewards: &[f64]) -> f64 {
        let sum: f64 = rewards.iter().sum();
        match self {
            RewardAggregation::Sum => sum,
            RewardAggregation::Mean => sum / rewards.len().max(1) as f64,
        }
    }
}

/// One transition runs from a fresh selection to the next one, so an option
/// that continues over several decision instants yields a single transition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CollectConfig {
    pub kind: CollectKind,
    pub n_transitions: usize,
    pub seed: u64,
    /// Episodes cycle through densities `0..=max_vehicles`.
    pub max_vehicles: usize,
    pub p_repeat: f64,
    pub reward_aggregation: RewardAggregation,
    pub scenario: ScenarioConfig,
    pub settings: DriveSettings,
}

impl CollectConfig {
    pub fn new(kind: CollectKind, n_transitions: usize, seed: u64) -> Self {
        Self {
            kind,
            n_transitions,
            seed,
            max_vehicles: 70,
            p_repeat: 0.8,
            reward_aggregation: RewardAggregation::Mean,
            scenario: ScenarioConfig::default(),
            settings: DriveSettings::default(),
        }
    }
}

/// Seed of the `index`-th episode drawn from a collection or evaluation seed.
pub fn episode_seed(seed: u64, index: u64) -> u64 {
    // splitmix64 step
    let mut z = seed
        .wrapping_add(0x9e37_79b9_7f4a_7c15)
        .wrapping_add(index.wrapping_mul(0x9e37_79b9_7f4a_7c15));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Stand-in candidate used when nothing is reachable: the ego's own position
/// and speed on its own lane, unbounded on both sides.
pub fn fallback_gap_features(sensor_range: f64) -> GapFeatures {
    GapFeatures {
        d_rel: 0.0,
        v_rel: 0.0,
        lane_rel: 0,
        len: 2.0 * sensor_range,
        af: 0,
    }
}

fn record_action(record: &DecisionRecord, sensor_range: f64) -> Result<Action> {
    match record.chosen_candidate() {
        Some(c) => match c.choice {
            Choice::Gap(id) => Ok(Action::Gap {
                id: Some(id),
                features: c.features.ok_or_else(|| {
                    Error::InvalidArgument("gap candidate without features".into())
                })?,
            }),
            Choice::Manoeuvre(m) => Ok(Action::Manoeuvre(m)),
        },
        None => Ok(Action::Gap {
            id: None,
            features: fallback_gap_features(sensor_range),
        }),
    }
}

fn next_gaps(record: &DecisionRecord, sensor_range: f64) -> Vec<GapFeatures> {
    let gaps: Vec<GapFeatures> = record.candidates.iter().filter_map(|c| c.features).collect();
    if gaps.is_empty() {
        vec![fallback_gap_features(sensor_range)]
    } else {
        gaps
    }
}

fn next_manoeuvres(record: &DecisionRecord) -> Vec<Manoeuvre> {
    let mut out: Vec<Manoeuvre> = record
        .candidates
        .iter()
        .filter_map(|c| match c.choice {
            Choice::Manoeuvre(m) => Some(m),
            Choice::Gap(_) => None,
        })
        .collect();
    if out.is_empty() {
        out.push(Manoeuvre::Keep);
    }
    out
}

struct Pending {
    obs: Observation,
    action: Action,
    rewards: Vec<f64>,
}

fn close(
    pending: Pending,
    next: &Observation,
    next_record: Option<&DecisionRecord>,
    cfg: &CollectConfig,
) -> Transition {
    let sr = cfg.settings.sensor_range;
    let (gaps, manoeuvres) = match (&pending.action, next_record) {
        (_, None) => (Vec::new(), Vec::new()),
        (Action::Gap { .. }, Some(r)) => (next_gaps(r, sr), Vec::new()),
        (Action::Manoeuvre(_), Some(r)) => (Vec::new(), next_manoeuvres(r)),
    };
    Transition {
        format_version: DATASET_FORMAT_VERSION,
        state: pending.obs.state,
        action: pending.action,
        reward: cfg.reward_aggregation.apply(&pending.rewards),
        next_state: next.state.clone(),
        next_gap_candidates: gaps,
        next_valid_actions: manoeuvres,
        duration: next.time - pending.obs.time,
        terminal: next_record.is_none(),
    }
}

/// Runs one collection episode, appending its transitions to `out`.
fn collect_episode(cfg: &CollectConfig, index: u64, out: &mut Vec<Transition>) -> Result<()> {
    let seed = episode_seed(cfg.seed, index);
    let n = (index % (cfg.max_vehicles as u64 + 1)) as usize;
    let scenario = generate_random_scenario(n, seed, &cfg.scenario)?;
    let rng = ChaCha8Rng::seed_from_u64(seed ^ AGENT_SALT);
    let mut agent: Box<dyn Agent> = match cfg.kind {
        CollectKind::RandomOptions => Box::new(OptionAgent::random(rng)),
        CollectKind::PseudoRandomHighLevel => Box::new(HighLevelAgent::pseudo_random(rng, cfg.p_repeat)),
    };
    let sr = cfg.settings.sensor_range;
    let mut runner = EpisodeRunner::new(&scenario, &cfg.settings, false);
    let mut pending: Option<Pending> = None;
    while !runner.is_done() {
        let obs = runner.observe();
        let record = runner.decide(agent.as_mut(), &obs)?;
        if record.selected || pending.is_none() {
            if let Some(p) = pending.take() {
                out.push(close(p, &obs, Some(&record), cfg));
            }
            pending = Some(Pending {
                action: record_action(&record, sr)?,
                obs,
                rewards: Vec::new(),
            });
        }
        let reward = runner.execute(agent.as_mut(), record);
        if let Some(p) = &mut pending {
            p.rewards.push(reward);
        }
    }
    if let Some(p) = pending {
        let obs = runner.observe();
        let end = runner.end().expect("episode finished");
        if end.is_terminal() {
            out.push(close(p, &obs, None, cfg));
        } else {
            // truncated by the time limit: bootstrap from what the agent would see next
            let record = runner.decide(agent.as_mut(), &obs)?;
            out.push(close(p, &obs, Some(&record), cfg));
        }
    }
    Ok(())
}

/// Collects exactly `n_transitions` transitions from consecutive random episodes.
pub fn collect_transitions(cfg: &CollectConfig) -> Result<Vec<Transition>> {
    if cfg.n_transitions == 0 {
        return Err(Error::InvalidArgument("n_transitions must be at least 1".into()));
    }
    if !(0.0..=1.0).contains(&cfg.p_repeat) {
        return Err(Error::InvalidArgument("p_repeat must lie in [0, 1]".into()));
    }
    let mut out = Vec::with_capacity(cfg.n_transitions + 64);
    let mut index = 0u64;
    while out.len() < cfg.n_transitions {
        collect_episode(cfg, index, &mut out)?;
        index += 1;
    }
    out.truncate(cfg.n_transitions);
    Ok(out)
}

/// Collects a dataset and writes it as JSON lines to `path`.
pub fn collect_dataset(cfg: &CollectConfig, path: &Path) -> Result<usize> {
    let transitions = collect_transitions(cfg)?;
    write_dataset(path, transitions.iter())?;
    Ok(transitions.len())
}
