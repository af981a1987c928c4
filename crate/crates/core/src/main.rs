use std::fs;
use std::io::{self, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use gapdrive::agents::DriveSettings;
use gapdrive::harness::{
    collect_dataset, critical_scenario_a, critical_scenario_b, evaluate_with, parse_plan_debug_input,
    plan_debug, run_episode, write_report, AgentSpec, CollectConfig, CollectKind, EvalConfig,
    RewardAggregation,
};
use gapdrive::learn::{train_files, Hyperparams};
use gapdrive::neural::ModelFile;
use gapdrive::world::{Scenario, TraceRow};

const SCHEMAS: &str = "\
File formats
  scenario JSON   {format_version, lane_count, road_length, lane_width, ego_start,
                   ego_desired_speed, seed, max_duration, vehicles: [{state, driver}]}
                  state = {id, lane_index, s, d, v, a, length}; s is the front bumper,
                  lane 0 is the right-most lane; driver = IDM parameters
                  {v0, T, a_max, b_comf, s0, delta, lane_change_prob_per_s,
                  b_emergency?}
  dataset JSONL   one transition per line: {format_version, state, action, reward,
                  next_state, next_gap_candidates, next_valid_actions, duration,
                  terminal}; action is {\"gap\": {id, features}} or {\"manoeuvre\": ..}
                  gap features = {d_rel, v_rel, lane_rel, len, af}
  model JSON      {format_version, kind: options|high_level, seed, training_steps,
                  online, targets: [net, net]}
  training log    CSV step,loss,mean_abs_q
  trace CSV       time,id,lane,s,d,v,a (id 0 is the ego)
  decisions JSONL one record per decision: {time, agent, candidates, q_values,
                  chosen, selected, changed, fallback, reward}
  eval output     report.json (full structure), report.csv
                  (agent,density,mean_speed,std_speed,episodes),
                  speed_by_density.csv (density column plus one column per agent),
                  critical.csv
                  (scenario,agent,mean_speed,std_speed,mean_duration,std_duration)
  plan-debug      input {scenario, ego?, previously_selected?}; output JSON lines of
                  type gap, candidate and a closing gapset line

Exit status: 0 on success, 1 on runtime errors, 2 on invalid arguments.";

#[derive(Parser)]
#[command(
    name = "gapdrive",
    version,
    about = "Gap-selection highway agent: collect, train, evaluate"
)]
#[command(after_long_help = SCHEMAS)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Drive random episodes and write a transition dataset (JSON lines).
    Collect(CollectArgs),
    /// Train a Q-network offline on a dataset.
    Train(TrainArgs),
    /// Evaluate agents on the density suite and the critical scenarios.
    Eval(EvalArgs),
    /// Run one episode and write its trace and decision log.
    Run(RunArgs),
    /// List every gap and planner candidate for one scene.
    PlanDebug(PlanDebugArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum KindArg {
    Options,
    HighLevel,
}

#[derive(Clone, Copy, ValueEnum)]
enum AggregationArg {
    Mean,
    Sum,
}

#[derive(Args)]
struct CollectArgs {
    #[arg(long, value_enum, default_value = "options")]
    kind: KindArg,
    /// Number of transitions.
    #[arg(long, default_value_t = 50_000)]
    n: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value = "dataset.jsonl")]
    out: PathBuf,
    #[arg(long, default_value_t = 70)]
    max_vehicles: usize,
    /// Probability of repeating the previous manoeuvre (high-level collection).
    #[arg(long, default_value_t = 0.8)]
    p_repeat: f64,
    /// Combination of the per-second rewards inside one transition.
    #[arg(long, value_enum, default_value = "mean")]
    reward_aggregation: AggregationArg,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long, default_value = "model.json")]
    out: PathBuf,
    /// Training log CSV; defaults to the model path with a .log.csv extension.
    #[arg(long)]
    log: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Start from the full-scale settings instead of the desk-scale ones.
    #[arg(long)]
    full_scale: bool,
    #[arg(long)]
    steps: Option<u64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    lr: Option<f64>,
    /// Discount each transition by gamma^duration.
    #[arg(long)]
    discount_by_duration: bool,
    #[arg(long)]
    log_every: Option<u64>,
    /// Checkpoint period in steps, 0 disables.
    #[arg(long)]
    checkpoint_every: Option<u64>,
}

#[derive(Args)]
struct EvalArgs {
    /// Comma-separated list of agents.
    #[arg(
        long,
        value_enum,
        value_delimiter = ',',
        default_value = "options,greedy,random,idm"
    )]
    agents: Vec<AgentArg>,
    /// Trained options models (one per member).
    #[arg(long, value_delimiter = ',')]
    options_models: Vec<PathBuf>,
    /// Trained high-level models (one per member).
    #[arg(long, value_delimiter = ',')]
    high_level_models: Vec<PathBuf>,
    #[arg(long, value_delimiter = ',', default_value = "10,20,30,40,50,60,70,80")]
    densities: Vec<usize>,
    #[arg(long, default_value_t = 10)]
    seeds_per_density: usize,
    /// Repetitions of the random agent.
    #[arg(long, default_value_t = 3)]
    runs: usize,
    #[arg(long, default_value_t = 2024)]
    seed: u64,
    /// Skip the two critical scenarios.
    #[arg(long)]
    no_critical: bool,
    #[arg(long, default_value = "eval_out")]
    out_dir: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum AgentArg {
    Options,
    HighLevel,
    Greedy,
    Random,
    Idm,
}

#[derive(Clone, Copy, ValueEnum)]
enum CriticalArg {
    A,
    B,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long, value_enum)]
    agent: AgentArg,
    /// Model file for the learned agents.
    #[arg(long)]
    model: Option<PathBuf>,
    /// Scenario JSON file.
    #[arg(long, conflicts_with = "critical")]
    scenario: Option<PathBuf>,
    /// One of the built-in critical scenarios.
    #[arg(long, value_enum)]
    critical: Option<CriticalArg>,
    /// Seed of the random agent.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "run_out")]
    out_dir: PathBuf,
}

#[derive(Args)]
struct PlanDebugArgs {
    /// Input JSON file, or - for stdin.
    #[arg(long, default_value = "-")]
    input: String,
    /// Output file; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> Result<()> {
    dispatch(Cli::parse())
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Collect(a) => collect(a),
        Command::Train(a) => train(a),
        Command::Eval(a) => eval(a),
        Command::Run(a) => run(a),
        Command::PlanDebug(a) => plan_debug_cmd(a),
    }
}

fn collect(a: CollectArgs) -> Result<()> {
    let kind = match a.kind {
        KindArg::Options => CollectKind::RandomOptions,
        KindArg::HighLevel => CollectKind::PseudoRandomHighLevel,
    };
    let mut cfg = CollectConfig::new(kind, a.n, a.seed);
    cfg.max_vehicles = a.max_vehicles;
    cfg.p_repeat = a.p_repeat;
    cfg.reward_aggregation = match a.reward_aggregation {
        AggregationArg::Mean => RewardAggregation::Mean,
        AggregationArg::Sum => RewardAggregation::Sum,
    };
    let n = collect_dataset(&cfg, &a.out).with_context(|| format!("collecting into {}", a.out.display()))?;
    eprintln!("wrote {n} transitions to {}", a.out.display());
    Ok(())
}

fn train(a: TrainArgs) -> Result<()> {
    let mut hp = if a.full_scale {
        Hyperparams::full_scale()
    } else {
        Hyperparams::desk_scale()
    };
    if let Some(v) = a.steps {
        hp.training_steps = v;
    }
    if let Some(v) = a.batch_size {
        hp.batch_size = v;
    }
    if let Some(v) = a.gamma {
        hp.gamma = v;
    }
    if let Some(v) = a.tau {
        hp.tau = v;
    }
    if let Some(v) = a.lr {
        hp.learning_rate = v;
    }
    if let Some(v) = a.log_every {
        hp.log_every = v;
    }
    if let Some(v) = a.checkpoint_every {
        hp.checkpoint_every = v;
    }
    hp.discount_by_duration |= a.discount_by_duration;
    hp.validate()?;
    let log = a.log.unwrap_or_else(|| a.out.with_extension("log.csv"));
    let outcome = train_files(&a.dataset, &a.out, &log, &hp, a.seed)
        .with_context(|| format!("training on {}", a.dataset.display()))?;
    if let Some(last) = outcome.log.last() {
        eprintln!(
            "step {} loss {:.6} mean |q| {:.4}",
            last.step, last.loss, last.mean_abs_q
        );
    }
    eprintln!("wrote {}", a.out.display());
    Ok(())
}

fn load_models(paths: &[PathBuf]) -> Result<Vec<ModelFile>> {
    paths
        .iter()
        .map(|p| ModelFile::load(p).with_context(|| format!("loading model {}", p.display())))
        .collect()
}

fn eval(a: EvalArgs) -> Result<()> {
    let mut specs = Vec::new();
    for &agent in &a.agents {
        let spec = match agent {
            AgentArg::Options => AgentSpec::Options(load_models(&a.options_models)?),
            AgentArg::HighLevel => AgentSpec::HighLevel(load_models(&a.high_level_models)?),
            AgentArg::Greedy => AgentSpec::Greedy,
            AgentArg::Random => AgentSpec::Random,
            AgentArg::Idm => AgentSpec::Idm,
        };
        spec.validate()?;
        specs.push(spec);
    }
    let cfg = EvalConfig {
        densities: a.densities,
        seeds_per_density: a.seeds_per_density,
        base_seed: a.seed,
        runs: a.runs,
        critical: !a.no_critical,
        ..EvalConfig::default()
    };
    let report = evaluate_with(&specs, &cfg, |_, _| {})?;
    write_report(&report, &a.out_dir)?;
    for agent in &report.agents {
        eprintln!(
            "{:<10} mean speed {:.3} ± {:.3}, collisions {}",
            agent.agent, agent.suite_mean_speed, agent.suite_std_speed, agent.collisions
        );
    }
    eprintln!("wrote report to {}", a.out_dir.display());
    Ok(())
}

fn run(a: RunArgs) -> Result<()> {
    let scenario = match (&a.scenario, a.critical) {
        (Some(path), _) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            Scenario::from_json(&text)?
        }
        (None, Some(CriticalArg::A)) => critical_scenario_a(),
        (None, Some(CriticalArg::B)) => critical_scenario_b(),
        (None, None) => bail!("either --scenario or --critical is required"),
    };
    let model = || -> Result<Vec<ModelFile>> {
        let path = a
            .model
            .as_ref()
            .context("--model is required for learned agents")?;
        load_models(std::slice::from_ref(path))
    };
    let spec = match a.agent {
        AgentArg::Options => AgentSpec::Options(model()?),
        AgentArg::HighLevel => AgentSpec::HighLevel(model()?),
        AgentArg::Greedy => AgentSpec::Greedy,
        AgentArg::Random => AgentSpec::Random,
        AgentArg::Idm => AgentSpec::Idm,
    };
    spec.validate()?;
    let mut agent = spec.build(0, a.seed, scenario.seed);
    let result = run_episode(&scenario, agent.as_mut(), &DriveSettings::default(), true)?;

    fs::create_dir_all(&a.out_dir)?;
    let mut trace = BufWriter::new(fs::File::create(a.out_dir.join("trace.csv"))?);
    writeln!(trace, "{}", TraceRow::CSV_HEADER)?;
    for row in result.trace.iter().flatten() {
        writeln!(trace, "{}", row.to_csv())?;
    }
    trace.flush()?;
    let mut decisions = BufWriter::new(fs::File::create(a.out_dir.join("decisions.jsonl"))?);
    for rec in &result.records {
        writeln!(decisions, "{}", rec.to_json_line())?;
    }
    decisions.flush()?;
    let summary = serde_json::json!({
        "agent": result.agent,
        "mean_speed": result.mean_speed,
        "duration": result.duration,
        "collision": result.collision,
        "end": result.end,
        "episode_return": result.episode_return,
        "decisions": result.records.len(),
    });
    fs::write(
        a.out_dir.join("summary.json"),
        serde_json::to_string_pretty(&summary)? + "\n",
    )?;
    eprintln!(
        "{}: mean speed {:.3} m/s over {:.1} s, end {:?}",
        result.agent, result.mean_speed, result.duration, result.end
    );
    Ok(())
}

fn read_input(input: &str) -> Result<String> {
    if input == "-" {
        let mut text = String::new();
        io::stdin().read_to_string(&mut text)?;
        Ok(text)
    } else {
        fs::read_to_string(Path::new(input)).with_context(|| format!("reading {input}"))
    }
}

fn plan_debug_cmd(a: PlanDebugArgs) -> Result<()> {
    let input = parse_plan_debug_input(&read_input(&a.input)?)?;
    let lines = plan_debug(&input, &DriveSettings::default())?;
    let mut out: Box<dyn Write> = match &a.out {
        Some(p) => Box::new(BufWriter::new(fs::File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    };
    for line in lines {
        writeln!(out, "{line}")?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;
    use gapdrive::harness::{CRITICAL_CSV_HEADER, DENSITY_CSV_HEADER};
    use gapdrive::learn::{init_learner, read_dataset};
    use gapdrive::neural::ModelKind;

    fn cli(args: &[&str]) -> Result<()> {
        dispatch(Cli::try_parse_from(
            std::iter::once("gapdrive").chain(args.iter().copied()),
        )?)
    }

    fn path(dir: &Path, name: &str) -> String {
        dir.join(name).display().to_string()
    }

    #[test]
    fn eval_writes_ten_episodes_per_agent_and_density() {
        let dir = tempfile::tempdir().unwrap();
        let out = path(dir.path(), "out");
        cli(&[
            "eval",
            "--agents",
            "greedy,random",
            "--densities",
            "10",
            "--runs",
            "1",
            "--no-critical",
            "--out-dir",
            &out,
        ])
        .unwrap();
        let csv = fs::read_to_string(dir.path().join("out/report.csv")).unwrap();
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some(DENSITY_CSV_HEADER));
        let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
        assert_eq!(rows.len(), 2);
        for (row, agent) in rows.iter().zip(["greedy", "random"]) {
            assert_eq!(row[0], agent);
            assert_eq!(row[1], "10");
            assert_eq!(row[4], "10");
            assert!(row[2].parse::<f64>().unwrap() > 0.0);
        }
        assert!(dir.path().join("out/report.json").exists());
        assert!(dir.path().join("out/speed_by_density.csv").exists());
        let critical = fs::read_to_string(dir.path().join("out/critical.csv")).unwrap();
        assert_eq!(critical.trim_end(), CRITICAL_CSV_HEADER);
    }

    #[test]
    fn train_with_zero_steps_writes_the_initial_model() {
        let dir = tempfile::tempdir().unwrap();
        let (data, model) = (path(dir.path(), "d.jsonl"), path(dir.path(), "m.json"));
        cli(&["collect", "--n", "50", "--seed", "4", "--out", &data]).unwrap();
        cli(&[
            "train",
            "--dataset",
            &data,
            "--steps",
            "0",
            "--seed",
            "9",
            "--out",
            &model,
        ])
        .unwrap();
        let model = ModelFile::load(Path::new(&model)).unwrap();
        let fresh = init_learner(ModelKind::Options, Hyperparams::desk_scale(), 9)
            .unwrap()
            .to_model();
        assert_eq!(model, fresh);
    }

    #[test]
    fn collect_is_byte_identical_across_runs() {
        let dir = tempfile::tempdir().unwrap();
        for name in ["a", "b"] {
            let options = path(dir.path(), &format!("{name}.jsonl"));
            let high = path(dir.path(), &format!("{name}_high.jsonl"));
            cli(&["collect", "--n", "120", "--seed", "21", "--out", &options]).unwrap();
            cli(&[
                "collect",
                "--kind",
                "high-level",
                "--n",
                "120",
                "--seed",
                "21",
                "--out",
                &high,
            ])
            .unwrap();
        }
        for (x, y) in [("a.jsonl", "b.jsonl"), ("a_high.jsonl", "b_high.jsonl")] {
            let x = fs::read(dir.path().join(x)).unwrap();
            let y = fs::read(dir.path().join(y)).unwrap();
            assert!(!x.is_empty());
            assert_eq!(x, y);
        }
        assert_eq!(read_dataset(&dir.path().join("a.jsonl")).unwrap().len(), 120);
        let high = read_dataset(&dir.path().join("a_high.jsonl")).unwrap();
        assert_eq!(high.kind(), Some(ModelKind::HighLevel));
    }

    #[test]
    fn help_documents_the_csv_headers() {
        let help = Cli::command().render_long_help().to_string();
        assert!(help.contains(TraceRow::CSV_HEADER));
        assert!(help.contains("step,loss,mean_abs_q"));
        assert!(help.contains(DENSITY_CSV_HEADER));
        assert!(help.contains(CRITICAL_CSV_HEADER));
    }

    #[test]
    fn bad_arguments_are_usage_errors() {
        for args in [
            &["gapdrive", "collect", "--n", "many"][..],
            &["gapdrive", "eval", "--agents", "oracle"],
            &["gapdrive", "frobnicate"],
            &["gapdrive", "train"],
            &[
                "gapdrive",
                "run",
                "--agent",
                "idm",
                "--critical",
                "a",
                "--scenario",
                "s.json",
            ],
        ] {
            let err = Cli::try_parse_from(args).err().unwrap();
            assert_eq!(err.exit_code(), 2, "{args:?}");
        }
    }

    #[test]
    fn runtime_errors_are_reported() {
        let dir = tempfile::tempdir().unwrap();
        let missing = path(dir.path(), "missing.jsonl");
        assert!(cli(&["train", "--dataset", &missing]).is_err());
        let missing = path(dir.path(), "missing.json");
        let out = path(dir.path(), "out");
        let err = cli(&[
            "eval",
            "--agents",
            "options",
            "--options-models",
            &missing,
            "--out-dir",
            &out,
        ])
        .unwrap_err();
        assert!(format!("{err:#}").contains("missing.json"));
    }

    #[test]
    fn run_writes_trace_decisions_and_summary() {
        let dir = tempfile::tempdir().unwrap();
        let out = path(dir.path(), "r");
        cli(&["run", "--agent", "greedy", "--critical", "a", "--out-dir", &out]).unwrap();
        let trace = fs::read_to_string(dir.path().join("r/trace.csv")).unwrap();
        assert_eq!(trace.lines().next(), Some(TraceRow::CSV_HEADER));
        let decisions = fs::read_to_string(dir.path().join("r/decisions.jsonl")).unwrap();
        let summary: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(dir.path().join("r/summary.json")).unwrap()).unwrap();
        assert_eq!(
            summary["decisions"].as_u64(),
            Some(decisions.lines().count() as u64)
        );
        assert_eq!(summary["collision"], serde_json::Value::Bool(false));
    }

    #[test]
    fn plan_debug_lists_gaps_candidates_and_the_gapset() {
        let dir = tempfile::tempdir().unwrap();
        let (input, out) = (path(dir.path(), "in.json"), path(dir.path(), "out.jsonl"));
        let doc = serde_json::json!({ "scenario": critical_scenario_a() });
        fs::write(&input, doc.to_string()).unwrap();
        cli(&["plan-debug", "--input", &input, "--out", &out]).unwrap();
        let lines: Vec<serde_json::Value> = fs::read_to_string(&out)
            .unwrap()
            .lines()
            .map(|l| serde_json::from_str(l).unwrap())
            .collect();
        let kinds: Vec<&str> = lines.iter().map(|v| v["type"].as_str().unwrap()).collect();
        assert!(kinds.contains(&"gap"));
        assert!(kinds.contains(&"candidate"));
        assert_eq!(kinds.last(), Some(&"gapset"));
    }
}
