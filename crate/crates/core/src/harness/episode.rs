use serde::{Deserialize, Serialize};

use super::reward::{reward, RewardParams};
use crate::agents::{Agent, DecisionInput, DecisionRecord, DriveSettings};
use crate::learn::RlState;
use crate::trajectory::EgoKinematics;
use crate::world::{sensor_view, Scenario, TraceRow, VehicleState, World, STEPS_PER_DECISION};
use crate::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EpisodeEnd {
    /// The scenario's time limit ran out.
    TimeLimit,
    /// The ego passed the end of the road.
    Exited,
    Collision,
}

impl EpisodeEnd {
    /// Whether the last transition ends the episode for learning purposes.
    pub fn is_terminal(self) -> bool {
        !matches!(self, EpisodeEnd::TimeLimit)
    }
}

/// What the agent observes at a decision instant.
#[derive(Debug, Clone)]
pub struct Observation {
    pub time: f64,
    pub view: Vec<VehicleState>,
    pub ego: EgoKinematics,
    pub ego_vehicle: VehicleState,
    pub state: RlState,
}

/// Drives one scenario with one agent at the decision cadence.
pub struct EpisodeRunner {
    world: World,
    settings: DriveSettings,
    params: RewardParams,
    max_steps: u64,
    records: Vec<DecisionRecord>,
    speeds: Vec<f64>,
    trace: Option<Vec<TraceRow>>,
    end: Option<EpisodeEnd>,
}

impl EpisodeRunner {
    pub fn new(scenario: &Scenario, settings: &DriveSettings, keep_trace: bool) -> Self {
        let world = World::new(scenario);
        let max_steps = (scenario.max_duration / world.dt()).round() as u64;
        let mut settings = settings.clone();
        settings.planner.lane_count = scenario.lane_count;
        settings.planner.lane_width = scenario.lane_width;
        let trace = keep_trace.then(|| world.trace_rows());
        let mut runner = Self {
            world,
            params: RewardParams {
                desired_speed: scenario.ego_desired_speed,
                change_penalty: settings.change_penalty,
            },
            settings,
            max_steps,
            records: Vec::new(),
            speeds: Vec::new(),
            trace,
            end: None,
        };
        runner.update_end();
        runner
    }

    pub fn world(&self) -> &World {
        &self.world
    }

    pub fn settings(&self) -> &DriveSettings {
        &self.settings
    }

    pub fn reward_params(&self) -> &RewardParams {
        &self.params
    }

    pub fn end(&self) -> Option<EpisodeEnd> {
        self.end
    }

    pub fn is_done(&self) -> bool {
        self.end.is_some()
    }

    pub fn records(&self) -> &[DecisionRecord] {
        &self.records
    }

    pub fn observe(&self) -> Observation {
        let view = sensor_view(self.world.state(), self.settings.sensor_range);
        let ego_vehicle = *self.world.ego();
        let state = RlState::observe(
            &ego_vehicle,
            &view,
            self.world.lane_count(),
            self.params.desired_speed,
            self.settings.sensor_range,
        );
        Observation {
            time: self.world.state().time,
            ego: EgoKinematics::from_world(&self.world),
            ego_vehicle,
            view,
            state,
        }
    }

    /// Asks the agent for its decision at the current instant.
    pub fn decide(&self, agent: &mut dyn Agent, obs: &Observation) -> Result<DecisionRecord> {
        let input = DecisionInput {
            time: obs.time,
            world: &self.world,
            view: &obs.view,
            ego: obs.ego,
            ego_vehicle: obs.ego_vehicle,
            state: &obs.state,
            desired_speed: self.params.desired_speed,
            settings: &self.settings,
        };
        agent.decide(&input)
    }

    /// Simulates one decision interval under `record` and returns its reward,
    /// taken at the ego speed reached at the end of the interval.
    pub fn execute(&mut self, agent: &mut dyn Agent, mut record: DecisionRecord) -> f64 {
        for _ in 0..STEPS_PER_DECISION {
            if self.is_done() {
                break;
            }
            let t = self.world.state().time + self.world.dt();
            let sp = agent.setpoint(&self.world, t);
            self.world.step(&sp);
            self.speeds.push(self.world.ego().v);
            if let Some(trace) = &mut self.trace {
                trace.extend(self.world.trace_rows());
            }
            self.update_end();
        }
        let r = reward(self.world.ego().v, &self.params, record.changed);
        record.reward = Some(r);
        self.records.push(record);
        r
    }

    fn update_end(&mut self) {
        let st = self.world.state();
        self.end = if st.ego_collision {
            Some(EpisodeEnd::Collision)
        } else if st.ego.s >= self.world.road_length() {
            Some(EpisodeEnd::Exited)
        } else if st.step >= self.max_steps {
            Some(EpisodeEnd::TimeLimit)
        } else {
            None
        };
    }

    pub fn finish(self, agent: &str) -> EpisodeResult {
        let steps = self.speeds.len();
        let mean_speed = if steps == 0 {
            self.world.ego().v
        } else {
            self.speeds.iter().sum::<f64>() / steps as f64
        };
        let ret = self.records.iter().filter_map(|r| r.reward).sum();
        EpisodeResult {
            agent: agent.to_string(),
            mean_speed,
            duration: self.world.state().time,
            collision: self.world.state().ego_collision,
            end: self.end.unwrap_or(EpisodeEnd::TimeLimit),
            episode_return: ret,
            speeds: self.speeds,
            records: self.records,
            trace: self.trace,
        }
    }
}

/// Outcome of one episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeResult {
    pub agent: String,
    /// Time average of the ego speed over every simulation step.
    pub mean_speed: f64,
    /// Simulated seconds.
    pub duration: f64,
    pub collision: bool,
    pub end: EpisodeEnd,
    /// Sum of the per-decision rewards.
    pub episode_return: f64,
    /// Ego speed after each simulation step.
    pub speeds: Vec<f64>,
    pub records: Vec<DecisionRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trace: Option<Vec<TraceRow>>,
}

impl EpisodeResult {
    /// Ego lane at the start and after every simulation step.
    pub fn ego_lanes(&self) -> Option<Vec<usize>> {
        let trace = self.trace.as_ref()?;
        Some(
            trace
                .iter()
                .filter(|r| r.id == crate::world::EGO_ID)
                .map(|r| r.lane)
                .collect(),
        )
    }
}

/// Runs `agent` on `scenario` until the time limit, a collision, or the road end.
pub fn run_episode(
    scenario: &Scenario,
    agent: &mut dyn Agent,
    settings: &DriveSettings,
    keep_trace: bool,
) -> Result<EpisodeResult> {
    let mut runner = EpisodeRunner::new(scenario, settings, keep_trace);
    while !runner.is_done() {
        let obs = runner.observe();
        let record = runner.decide(agent, &obs)?;
        runner.execute(agent, record);
    }
    let name = agent.name().to_string();
    Ok(runner.finish(&name))
}
