use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::collect::episode_seed;
use super::episode::{run_episode, EpisodeEnd, EpisodeResult};
use super::scenarios::{critical_scenario_a, critical_scenario_b};
use crate::agents::{Agent, DriveSettings, HighLevelAgent, IdmAgent, OptionAgent};
use crate::neural::{ModelFile, ModelKind};
use crate::world::{generate_random_scenario, Scenario, ScenarioConfig};
use crate::{Error, Result};

pub const REPORT_FORMAT_VERSION: u32 = 1;
const RANDOM_AGENT_SALT: u64 = 0x7a4d_0a6e_0000_0005;

/// An agent under evaluation. Learned agents carry one model per member.
#[derive(Debug, Clone)]
pub enum AgentSpec {
    Options(Vec<ModelFile>),
    HighLevel(Vec<ModelFile>),
    Greedy,
    Random,
    Idm,
}

impl AgentSpec {
    pub fn name(&self) -> &'static str {
        match self {
            AgentSpec::Options(_) => "options",
            AgentSpec::HighLevel(_) => "high_level",
            AgentSpec::Greedy => "greedy",
            AgentSpec::Random => "random",
            AgentSpec::Idm => "idm",
        }
    }

    /// Independent repetitions: one per model, `runs` for the random agent, else one.
    pub fn members(&self, runs: usize) -> usize {
        match self {
            AgentSpec::Options(m) | AgentSpec::HighLevel(m) => m.len(),
            AgentSpec::Random => runs,
            AgentSpec::Greedy | AgentSpec::Idm => 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let check = |models: &[ModelFile], kind: ModelKind| -> Result<()> {
            if models.is_empty() {
                return Err(Error::InvalidArgument(format!(
                    "{} agent needs at least one model",
                    self.name()
                )));
            }
            for m in models {
                m.validate()?;
                if m.kind != kind {
                    return Err(Error::InvalidArgument(format!(
                        "{} agent given a {:?} model",
                        self.name(),
                        m.kind
                    )));
                }
            }
            Ok(())
        };
        match self {
            AgentSpec::Options(m) => check(m, ModelKind::Options),
            AgentSpec::HighLevel(m) => check(m, ModelKind::HighLevel),
            _ => Ok(()),
        }
    }

    /// Fresh agent for one episode.
    pub fn build(&self, member: usize, base_seed: u64, scenario_seed: u64) -> Box<dyn Agent> {
        match self {
            AgentSpec::Options(m) => Box::new(OptionAgent::learned(m[member].online.clone())),
            AgentSpec::HighLevel(m) => Box::new(HighLevelAgent::learned(m[member].online.clone())),
            AgentSpec::Greedy => Box::new(OptionAgent::greedy()),
            AgentSpec::Random => {
                let seed = episode_seed(base_seed ^ RANDOM_AGENT_SALT, member as u64) ^ scenario_seed;
                Box::new(OptionAgent::random(ChaCha8Rng::seed_from_u64(seed)))
            }
            AgentSpec::Idm => Box::new(IdmAgent::new()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub densities: Vec<usize>,
    pub seeds_per_density: usize,
    pub base_seed: u64,
    pub runs: usize,
    pub critical: bool,
    pub scenario: ScenarioConfig,
    pub settings: DriveSettings,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            densities: (1..=8).map(|k| 10 * k).collect(),
            seeds_per_density: 10,
            base_seed: 2024,
            runs: 3,
            critical: true,
            scenario: ScenarioConfig::default(),
            settings: DriveSettings::default(),
        }
    }
}

impl EvalConfig {
    /// Random-suite scenario `index` at `density`; identical for every agent.
    pub fn scenario_seed(&self, density: usize, index: usize) -> u64 {
        episode_seed(self.base_seed, (density * 1000 + index) as u64)
    }

    pub fn suite(&self) -> Result<Vec<SuiteEntry>> {
        let mut out = Vec::new();
        for &n in &self.densities {
            for i in 0..self.seeds_per_density {
                let seed = self.scenario_seed(n, i);
                out.push(SuiteEntry {
                    label: "random".into(),
                    density: Some(n),
                    seed,
                    scenario: generate_random_scenario(n, seed, &self.scenario)?,
                });
            }
        }
        if self.critical {
            for (label, scenario) in [("critical_a", critical_scenario_a()), ("critical_b", critical_scenario_b())] {
                out.push(SuiteEntry {
                    label: label.into(),
                    density: None,
                    seed: scenario.seed,
                    scenario,
                });
            }
        }
        Ok(out)
    }
}

#[derive(Debug, Clone)]
pub struct SuiteEntry {
    pub label: String,
    pub density: Option<usize>,
    pub seed: u64,
    pub scenario: Scenario,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeSummary {
    pub member: usize,
    pub suite: String,
    pub density: Option<usize>,
    pub seed: u64,
    pub mean_speed: f64,
    pub duration: f64,
    pub collision: bool,
    pub end: EpisodeEnd,
    pub episode_return: f64,
    pub decisions: usize,
    pub fallbacks: usize,
}

impl EpisodeSummary {
    fn from_result(member: usize, entry: &SuiteEntry, r: &EpisodeResult) -> Self {
        Self {
            member,
            suite: entry.label.clone(),
            density: entry.density,
            seed: entry.seed,
            mean_speed: r.mean_speed,
            duration: r.duration,
            collision: r.collision,
            end: r.end,
            episode_return: r.episode_return,
            decisions: r.records.len(),
            fallbacks: r.records.iter().filter(|d| d.fallback).count(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityRow {
    pub density: usize,
    pub mean_speed: f64,
    /// Across members.
    pub std_speed: f64,
    pub episodes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriticalRow {
    pub scenario: String,
    pub mean_speed: f64,
    pub std_speed: f64,
    pub mean_duration: f64,
    pub std_duration: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentReport {
    pub agent: String,
    pub members: usize,
    /// Mean speed over the random suite, per member.
    pub member_means: Vec<f64>,
    pub suite_mean_speed: f64,
    pub suite_std_speed: f64,
    pub densities: Vec<DensityRow>,
    pub critical: Vec<CriticalRow>,
    pub collisions: usize,
    pub episodes: Vec<EpisodeSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub format_version: u32,
    pub densities: Vec<usize>,
    pub seeds_per_density: usize,
    pub base_seed: u64,
    pub runs: usize,
    pub agents: Vec<AgentReport>,
}

impl EvalReport {
    pub fn agent(&self, name: &str) -> Option<&AgentReport> {
        self.agents.iter().find(|a| a.agent == name)
    }
}

fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Population standard deviation.
fn std_dev(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    (xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / xs.len() as f64).sqrt()
}

fn summarize(agent: &str, members: usize, cfg: &EvalConfig, episodes: Vec<EpisodeSummary>) -> AgentReport {
    let member_mean = |m: usize, pred: &dyn Fn(&EpisodeSummary) -> bool, f: &dyn Fn(&EpisodeSummary) -> f64| {
        let xs: Vec<f64> = episodes
            .iter()
            .filter(|e| e.member == m && pred(e))
            .map(f)
            .collect();
        mean(&xs)
    };
    let random = |e: &EpisodeSummary| e.density.is_some();
    let member_means: Vec<f64> = (0..members)
        .map(|m| member_mean(m, &random, &|e| e.mean_speed))
        .collect();
    let densities = cfg
        .densities
        .iter()
        .map(|&n| {
            let per: Vec<f64> = (0..members)
                .map(|m| member_mean(m, &|e| e.density == Some(n), &|e| e.mean_speed))
                .collect();
            DensityRow {
                density: n,
                mean_speed: mean(&per),
                std_speed: std_dev(&per),
                episodes: episodes.iter().filter(|e| e.density == Some(n)).count(),
            }
        })
        .collect();
    let mut labels: Vec<String> = Vec::new();
    for e in episodes.iter().filter(|e| e.density.is_none()) {
        if !labels.contains(&e.suite) {
            labels.push(e.suite.clone());
        }
    }
    let critical = labels
        .into_iter()
        .map(|label| {
            let is = |e: &EpisodeSummary| e.suite == label;
            let speeds: Vec<f64> = (0..members).map(|m| member_mean(m, &is, &|e| e.mean_speed)).collect();
            let durations: Vec<f64> = (0..members).map(|m| member_mean(m, &is, &|e| e.duration)).collect();
            CriticalRow {
                scenario: label.clone(),
                mean_speed: mean(&speeds),
                std_speed: std_dev(&speeds),
                mean_duration: mean(&durations),
                std_duration: std_dev(&durations),
            }
        })
        .collect();
    AgentReport {
        agent: agent.to_string(),
        members,
        suite_mean_speed: mean(&member_means),
        suite_std_speed: std_dev(&member_means),
        member_means,
        densities,
        critical,
        collisions: episodes.iter().filter(|e| e.collision).count(),
        episodes,
    }
}

/// Runs every agent member on the same suite, reporting progress per episode.
pub fn evaluate_with<F>(agents: &[AgentSpec], cfg: &EvalConfig, mut on_episode: F) -> Result<EvalReport>
where
    F: FnMut(&str, &EpisodeSummary),
{
    if cfg.runs == 0 {
        return Err(Error::InvalidArgument("runs must be at least 1".into()));
    }
    let suite = cfg.suite()?;
    let mut reports = Vec::with_capacity(agents.len());
    for spec in agents {
        spec.validate()?;
        let members = spec.members(cfg.runs);
        let mut episodes = Vec::with_capacity(members * suite.len());
        for member in 0..members {
            for entry in &suite {
                let mut agent = spec.build(member, cfg.base_seed, entry.seed);
                let result = run_episode(&entry.scenario, agent.as_mut(), &cfg.settings, false)?;
                let summary = EpisodeSummary::from_result(member, entry, &result);
                on_episode(spec.name(), &summary);
                episodes.push(summary);
            }
        }
        reports.push(summarize(spec.name(), members, cfg, episodes));
    }
    Ok(EvalReport {
        format_version: REPORT_FORMAT_VERSION,
        densities: cfg.densities.clone(),
        seeds_per_density: cfg.seeds_per_density,
        base_seed: cfg.base_seed,
        runs: cfg.runs,
        agents: reports,
    })
}

pub fn evaluate(agents: &[AgentSpec], cfg: &EvalConfig) -> Result<EvalReport> {
    evaluate_with(agents, cfg, |_, _| {})
}

pub const DENSITY_CSV_HEADER: &str = "agent,density,mean_speed,std_speed,episodes";
pub const CRITICAL_CSV_HEADER: &str = "scenario,agent,mean_speed,std_speed,mean_duration,std_duration";

/// Per-density rows of every agent.
pub fn density_csv(report: &EvalReport) -> String {
    let mut out = format!("{DENSITY_CSV_HEADER}\n");
    for a in &report.agents {
        for d in &a.densities {
            let _ = writeln!(out, "{},{},{},{},{}", a.agent, d.density, d.mean_speed, d.std_speed, d.episodes);
        }
    }
    out
}

/// Wide table: one row per density, one mean-speed column per agent.
pub fn speed_by_density_csv(report: &EvalReport) -> String {
    let mut out = String::from("density");
    for a in &report.agents {
        let _ = write!(out, ",{}", a.agent);
    }
    out.push('\n');
    for (i, n) in report.densities.iter().enumerate() {
        let _ = write!(out, "{n}");
        for a in &report.agents {
            let _ = write!(out, ",{}", a.densities[i].mean_speed);
        }
        out.push('\n');
    }
    out
}

pub fn critical_csv(report: &EvalReport) -> String {
    let mut out = format!("{CRITICAL_CSV_HEADER}\n");
    for a in &report.agents {
        for c in &a.critical {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                c.scenario, a.agent, c.mean_speed, c.std_speed, c.mean_duration, c.std_duration
            );
        }
    }
    out
}

/// Writes `report.json`, `report.csv`, `speed_by_density.csv` and `critical.csv` into `dir`.
pub fn write_report(report: &EvalReport, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    let json = serde_json::to_string_pretty(report)?;
    fs::write(dir.join("report.json"), json + "\n")?;
    fs::write(dir.join("report.csv"), density_csv(report))?;
    fs::write(dir.join("speed_by_density.csv"), speed_by_density_csv(report))?;
    fs::write(dir.join("critical.csv"), critical_csv(report))?;
    Ok(())
}
