//! Reward, episode loop, data collection, scenario suites and evaluation.

mod collect;
mod debug;
mod episode;
mod eval;
mod reward;
mod scenarios;

pub use collect::{
    collect_dataset, collect_transitions, episode_seed, fallback_gap_features, CollectConfig,
    CollectKind, RewardAggregation,
};
pub use debug::{parse_plan_debug_input, plan_debug, PlanDebugInput};
pub use episode::{run_episode, EpisodeEnd, EpisodeResult, EpisodeRunner, Observation};
pub use eval::{
    critical_csv, density_csv, evaluate, evaluate_with, speed_by_density_csv, write_report,
    AgentReport, AgentSpec, CriticalRow, DensityRow, EpisodeSummary, EvalConfig, EvalReport,
    SuiteEntry, CRITICAL_CSV_HEADER, DENSITY_CSV_HEADER, REPORT_FORMAT_VERSION,
};
pub use reward::{reward, RewardParams, DEFAULT_CHANGE_PENALTY};
pub use scenarios::{
    critical_scenario_a, critical_scenario_b, CRITICAL_DESIRED_SPEED, CRITICAL_MAX_DURATION,
    CRITICAL_ROAD_AHEAD, SCENARIO_A_SPEED, SCENARIO_B_SPEED,
};
