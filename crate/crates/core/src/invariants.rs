//! Invariants that cut across modules, as property tests and dataset scans.

use std::sync::OnceLock;

use crate::agents::{DriveSettings, OptionAgent};
use crate::gaps::{enumerate_gaps, reachable_gaps, GapContext, GapFeatures};
use crate::harness::{
    collect_transitions, evaluate, reward, run_episode, AgentSpec, CollectConfig, CollectKind, EvalConfig,
    RewardParams,
};
use crate::learn::{
    compute_targets, init_learner, train, Action, Dataset, Hyperparams, RlState, Transition,
    DATASET_FORMAT_VERSION,
};
use crate::neural::{Architecture, DeepSetQNet, ModelFile, ModelKind, DYNAMIC_DIM};
use crate::trajectory::{
    check_feasible_with_step, fit_quintic, integral_squared_jerk, relevant_vehicles, sample_trajectories,
    EgoKinematics, PlannerConfig, QuinticPoly,
};
use crate::world::{
    generate_random_scenario, sensor_view, DriverParams, EgoSetpoint, Scenario, ScenarioConfig,
    ScenarioVehicle, VehicleState, World, DEFAULT_LANE_WIDTH, EGO_ID, SCENARIO_FORMAT_VERSION,
    STEPS_PER_DECISION,
};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn cases(n: u32) -> ProptestConfig {
    ProptestConfig {
        cases: n,
        ..ProptestConfig::default()
    }
}

fn no_lane_changes(mut scenario: Scenario) -> Scenario {
    for v in &mut scenario.vehicles {
        v.driver.lane_change_prob_per_s = 0.0;
    }
    scenario
}

/// Keeps the ego on its lane at constant speed.
fn cruise(world: &World) -> EgoSetpoint {
    let mut sp = world.ego_setpoint();
    sp.s += sp.v * world.dt();
    sp.a = 0.0;
    sp.lateral_v = 0.0;
    sp.lateral_a = 0.0;
    sp
}

fn gap_context(scenario: &Scenario) -> GapContext {
    GapContext {
        sensor_range: DriveSettings::default().sensor_range,
        desired_speed: scenario.ego_desired_speed,
        lane_count: scenario.lane_count,
    }
}

// ---------------------------------------------------------------- world

proptest! {
    #![proptest_config(cases(24))]

    #[test]
    fn world_is_deterministic(n in 0usize..40, seed in any::<u64>(), wobble in -1.0f64..1.0) {
        let scenario = generate_random_scenario(n, seed, &ScenarioConfig::default()).unwrap();
        let mut a = World::new(&scenario);
        let mut b = World::new(&scenario);
        for k in 0..80 {
            let mut sp = cruise(&a);
            sp.lateral += 0.01 * wobble * (k as f64 * 0.3).sin();
            a.step(&sp);
            b.step(&sp);
            prop_assert_eq!(a.state(), b.state());
        }
    }

    #[test]
    fn idm_follower_never_hits_a_constant_speed_leader(
        v_lead in 5.0f64..30.0,
        slower in 0.0f64..1.0,
        gap_extra in 0.0f64..60.0,
        v0 in 20.0f64..35.0,
    ) {
        let driver = DriverParams { v0, lane_change_prob_per_s: 0.0, ..DriverParams::default() };
        let v_follow = (v_lead * slower).min(v0);
        let leader_driver = DriverParams {
            v0: v_lead,
            a_max: 1e-12,
            b_comf: 1e12,
            lane_change_prob_per_s: 0.0,
            ..DriverParams::default()
        };
        let follower = VehicleState::new(1, 0, 100.0, v_follow);
        let leader = VehicleState::new(2, 0, 100.0 + follower.length + driver.s0 + gap_extra, v_lead);
        let scenario = Scenario {
            format_version: SCENARIO_FORMAT_VERSION,
            lane_count: 2,
            road_length: 1e5,
            lane_width: DEFAULT_LANE_WIDTH,
            vehicles: vec![
                ScenarioVehicle { state: follower, driver },
                ScenarioVehicle { state: leader, driver: leader_driver },
            ],
            ego_start: VehicleState::new(0, 1, 0.0, 0.0),
            ego_desired_speed: 30.0,
            seed: 0,
            max_duration: 120.0,
        };
        scenario.validate().unwrap();
        let mut world = World::new(&scenario);
        for _ in 0..1200 {
            let sp = world.ego_setpoint();
            world.step(&sp);
            let vs = &world.state().vehicles;
            prop_assert!(vs[1].rear() - vs[0].s > 0.0, "gap closed at t={}", world.state().time);
            prop_assert!(!world.state().collision_flag);
        }
    }

    #[test]
    fn empty_world_ego_lands_on_setpoints(
        steps in proptest::collection::vec((0.0f64..40.0, -1.0f64..8.0, -3.0f64..3.0), 1..40),
    ) {
        let scenario = Scenario {
            format_version: SCENARIO_FORMAT_VERSION,
            lane_count: 3,
            road_length: 1e6,
            lane_width: DEFAULT_LANE_WIDTH,
            vehicles: Vec::new(),
            ego_start: VehicleState::new(0, 0, 0.0, 10.0),
            ego_desired_speed: 30.0,
            seed: 0,
            max_duration: 60.0,
        };
        let mut world = World::new(&scenario);
        let mut s = 0.0;
        for (v, lateral, a) in steps {
            s += v * world.dt();
            let sp = EgoSetpoint { s, lateral, v, a, lateral_v: 0.1, lateral_a: -0.1 };
            world.step(&sp);
            let ego = world.ego();
            prop_assert_eq!(ego.s, s);
            prop_assert_eq!(ego.v, v);
            prop_assert_eq!(ego.a, a);
            prop_assert!((ego.lateral(DEFAULT_LANE_WIDTH) - lateral).abs() < 1e-12);
            prop_assert_eq!(world.state().ego_lateral_velocity, 0.1);
            prop_assert!(!world.state().collision_flag);
        }
    }
}

// ---------------------------------------------------------------- trajectory

proptest! {
    #![proptest_config(cases(200))]

    #[test]
    fn quintic_meets_both_boundaries(
        p0 in -100.0f64..100.0, v0 in -30.0f64..30.0, a0 in -5.0f64..5.0,
        p1 in -100.0f64..300.0, v1 in -30.0f64..30.0, a1 in -5.0f64..5.0,
        duration in 0.5f64..10.0,
    ) {
        let poly = fit_quintic((p0, v0, a0), (p1, v1, a1), duration).unwrap();
        let s0 = poly.eval(0.0).unwrap();
        let s1 = poly.eval(duration).unwrap();
        for (got, want) in [(s0.p, p0), (s0.v, v0), (s0.a, a0), (s1.p, p1), (s1.v, v1), (s1.a, a1)] {
            prop_assert!((got - want).abs() <= 1e-9 * (1.0 + want.abs()), "{got} vs {want}");
        }
    }

    #[test]
    fn squared_jerk_is_zero_exactly_for_low_degree(
        low in proptest::array::uniform3(-10.0f64..10.0),
        high in proptest::array::uniform3(prop_oneof![Just(0.0), 0.01f64..1.0, -1.0f64..-0.01]),
        duration in 0.5f64..8.0,
    ) {
        let poly = QuinticPoly {
            coeffs: [low[0], low[1], low[2], high[0], high[1], high[2]],
            duration,
        };
        let j = integral_squared_jerk(&poly);
        prop_assert!(j >= 0.0);
        prop_assert_eq!(j == 0.0, poly.degree() <= 2);
    }
}

fn planning_scene(n: usize, seed: u64) -> (Scenario, World) {
    let scenario = generate_random_scenario(n, seed, &ScenarioConfig::default()).unwrap();
    let world = World::new(&scenario);
    (scenario, world)
}

proptest! {
    #![proptest_config(cases(24))]

    #[test]
    fn raising_the_jerk_weight_never_demotes_the_smoothest_candidate(
        n in 0usize..30,
        seed in any::<u64>(),
        pick in any::<prop::sample::Index>(),
        factor in 1.0f64..20.0,
    ) {
        let (scenario, world) = planning_scene(n, seed);
        let ego = EgoKinematics::from_world(&world);
        let view = sensor_view(world.state(), DriveSettings::default().sensor_range);
        let gaps = enumerate_gaps(&view, world.ego(), &gap_context(&scenario), None);
        let gap = &gaps[pick.index(gaps.len())];
        let base = PlannerConfig::default();
        let mut heavy = base.clone();
        heavy.weights.jerk *= factor;
        let rank = |cfg: &PlannerConfig| {
            let c = sample_trajectories(&ego, &gap.region, scenario.ego_desired_speed, &view, cfg).unwrap();
            let jerk = |i: usize| c[i].cost.jerk_long + c[i].cost.jerk_lat;
            let smooth = (0..c.len()).min_by(|&a, &b| jerk(a).total_cmp(&jerk(b))).unwrap();
            c.iter().filter(|t| t.cost.total < c[smooth].cost.total).count()
        };
        prop_assert!(rank(&heavy) <= rank(&base));
    }
}

// ---------------------------------------------------------------- gaps

proptest! {
    #![proptest_config(cases(24))]

    #[test]
    fn every_reachable_gap_carries_a_feasible_plan_into_it(n in 0usize..50, seed in any::<u64>()) {
        let (scenario, world) = planning_scene(n, seed);
        let ego = EgoKinematics::from_world(&world);
        let view = sensor_view(world.state(), DriveSettings::default().sensor_range);
        let gaps = enumerate_gaps(&view, world.ego(), &gap_context(&scenario), None);
        let planner = PlannerConfig::default();
        let set = reachable_gaps(&gaps, &ego, &view, scenario.ego_desired_speed, &planner, 0.0).unwrap();
        let mut ids: Vec<_> = set.ids().collect();
        ids.sort();
        ids.dedup();
        prop_assert_eq!(ids.len(), set.len());
        for rg in &set.gaps {
            let t = &rg.trajectory;
            prop_assert!(t.feasibility.is_feasible());
            prop_assert_eq!(t.target_lane, rg.gap.lane());
            prop_assert!(rg.gap.region.contains(t.end_s(), t.duration, ego.length));
            let relevant = relevant_vehicles(&view, ego.lane_index, rg.gap.lane());
            let again = check_feasible_with_step(t, ego.length, &relevant, &planner.safety, planner.check_dt);
            prop_assert!(again.is_feasible());
        }
    }

    #[test]
    fn gap_lanes_are_adjacent(n in 0usize..60, seed in any::<u64>()) {
        let (scenario, world) = planning_scene(n, seed);
        let view = sensor_view(world.state(), DriveSettings::default().sensor_range);
        for g in enumerate_gaps(&view, world.ego(), &gap_context(&scenario), None) {
            prop_assert!(g.features.lane_rel.abs() <= 1);
            prop_assert_eq!(
                g.features.lane_rel as i64,
                g.lane() as i64 - world.ego().lane_index as i64
            );
        }
    }

    #[test]
    fn bounded_gap_ids_survive_a_decision_interval(n in 5usize..50, seed in any::<u64>()) {
        let scenario = no_lane_changes(generate_random_scenario(n, seed, &ScenarioConfig::default()).unwrap());
        let ctx = gap_context(&scenario);
        let range = DriveSettings::default().sensor_range;
        let mut world = World::new(&scenario);
        let before = enumerate_gaps(&sensor_view(world.state(), range), world.ego(), &ctx, None);
        for _ in 0..STEPS_PER_DECISION {
            let sp = cruise(&world);
            world.step(&sp);
        }
        prop_assume!(!world.state().collision_flag);
        let view = sensor_view(world.state(), range);
        let after = enumerate_gaps(&view, world.ego(), &ctx, None);
        let sensed = |id: Option<u32>| id.is_some_and(|id| view.iter().any(|v| v.id == id));
        for g in before {
            if sensed(g.id.follower_id) && sensed(g.id.leader_id) {
                prop_assert!(after.iter().any(|h| h.id == g.id), "lost {:?}", g.id);
            }
        }
    }

    #[test]
    fn relaxing_headway_limits_only_adds_gaps(
        n in 0usize..50,
        seed in any::<u64>(),
        ttc_scale in 0.05f64..1.0,
        thw_scale in 0.05f64..1.0,
    ) {
        let (scenario, world) = planning_scene(n, seed);
        let ego = EgoKinematics::from_world(&world);
        let view = sensor_view(world.state(), DriveSettings::default().sensor_range);
        let gaps = enumerate_gaps(&view, world.ego(), &gap_context(&scenario), None);
        let strict = PlannerConfig::default();
        let mut loose = strict.clone();
        loose.safety.ttc_min *= ttc_scale;
        loose.safety.thw_min *= thw_scale;
        let a = reachable_gaps(&gaps, &ego, &view, scenario.ego_desired_speed, &strict, 0.0).unwrap();
        let b = reachable_gaps(&gaps, &ego, &view, scenario.ego_desired_speed, &loose, 0.0).unwrap();
        for id in a.ids() {
            prop_assert!(b.find(id).is_some(), "{:?} lost after relaxing", id);
        }
    }
}

// ---------------------------------------------------------------- neural

fn dynamic_rows(rng: &mut ChaCha8Rng, n: usize) -> Vec<[f64; DYNAMIC_DIM]> {
    (0..n)
        .map(|_| {
            [
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
                f64::from(rng.gen_range(-1i32..=1)),
            ]
        })
        .collect()
}

fn random_gap(rng: &mut ChaCha8Rng) -> GapFeatures {
    GapFeatures {
        d_rel: rng.gen_range(-1.0..1.0),
        v_rel: rng.gen_range(-1.0..1.0),
        lane_rel: rng.gen_range(-1..=1),
        len: rng.gen_range(0.0..2.0),
        af: rng.gen_range(0..=1),
    }
}

proptest! {
    #![proptest_config(cases(64))]

    #[test]
    fn q_ignores_the_order_of_sensed_vehicles(seed in any::<u64>(), n in 0usize..30) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let net = DeepSetQNet::new(Architecture::options(), &mut rng).unwrap();
        let mut rows = dynamic_rows(&mut rng, n);
        let stat = [rng.gen_range(0.0..1.2), 1.0, 0.0];
        let gap = random_gap(&mut rng).network_input();
        let q = net.forward_q(&rows, &stat, &gap).unwrap();
        rows.shuffle(&mut rng);
        prop_assert_eq!(q.to_bits(), net.forward_q(&rows, &stat, &gap).unwrap().to_bits());
    }

    #[test]
    fn saved_model_reloads_bit_identical(seed in any::<u64>(), n in 0usize..20) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let arch = Architecture::options();
        let nets: Vec<DeepSetQNet> = (0..3).map(|_| DeepSetQNet::new(arch.clone(), &mut rng).unwrap()).collect();
        let model = ModelFile::new(ModelKind::Options, seed, nets[0].clone(), [nets[1].clone(), nets[2].clone()]);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        model.save(&path).unwrap();
        let loaded = ModelFile::load(&path).unwrap();
        prop_assert_eq!(&loaded, &model);
        let rows = dynamic_rows(&mut rng, n);
        let stat = [0.7, 1.0, 1.0];
        let gap = random_gap(&mut rng).network_input();
        for (a, b) in [(&model.online, &loaded.online), (&model.targets[0], &loaded.targets[0]), (&model.targets[1], &loaded.targets[1])] {
            let qa = a.forward_q(&rows, &stat, &gap).unwrap();
            let qb = b.forward_q(&rows, &stat, &gap).unwrap();
            prop_assert_eq!(qa.to_bits(), qb.to_bits());
        }
    }
}

// ---------------------------------------------------------------- learn

fn random_transition(rng: &mut ChaCha8Rng) -> Transition {
    let state = |rng: &mut ChaCha8Rng| {
        let n = rng.gen_range(0..12);
        RlState {
            dynamic: dynamic_rows(rng, n),
            static_features: [rng.gen_range(0.0..1.2), 1.0, f64::from(rng.gen_range(0..=1))],
        }
    };
    let candidates = (0..rng.gen_range(1..6)).map(|_| random_gap(rng)).collect();
    Transition {
        format_version: DATASET_FORMAT_VERSION,
        state: state(rng),
        action: Action::Gap {
            id: None,
            features: random_gap(rng),
        },
        reward: rng.gen_range(-0.01..1.0),
        next_state: state(rng),
        next_gap_candidates: candidates,
        next_valid_actions: Vec::new(),
        duration: 1.0,
        terminal: false,
    }
}

fn small_dataset() -> &'static Dataset {
    static D: OnceLock<Dataset> = OnceLock::new();
    D.get_or_init(|| {
        let cfg = CollectConfig::new(CollectKind::RandomOptions, 200, 3);
        Dataset::new(collect_transitions(&cfg).unwrap()).unwrap()
    })
}

proptest! {
    #![proptest_config(cases(64))]

    #[test]
    fn min_of_two_target_never_exceeds_either_net(seed in any::<u64>(), gamma in 0.0f64..1.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = DeepSetQNet::new(Architecture::options(), &mut rng).unwrap();
        let b = DeepSetQNet::new(Architecture::options(), &mut rng).unwrap();
        let batch: Vec<Transition> = (0..8).map(|_| random_transition(&mut rng)).collect();
        let refs: Vec<&Transition> = batch.iter().collect();
        let both = compute_targets(&refs, &[a.clone(), b.clone()], gamma, false).unwrap();
        let only_a = compute_targets(&refs, &[a.clone(), a], gamma, false).unwrap();
        let only_b = compute_targets(&refs, &[b.clone(), b], gamma, false).unwrap();
        for i in 0..batch.len() {
            prop_assert!(both[i] <= only_a[i] && both[i] <= only_b[i]);
        }
    }
}

proptest! {
    #![proptest_config(cases(4))]

    #[test]
    fn training_is_a_pure_function_of_data_hyperparams_and_seed(seed in any::<u64>()) {
        let hp = Hyperparams {
            training_steps: 25,
            batch_size: 16,
            log_every: 5,
            ..Hyperparams::desk_scale()
        };
        let a = train(small_dataset(), &hp, seed, |_, _| Ok(())).unwrap();
        let b = train(small_dataset(), &hp, seed, |_, _| Ok(())).unwrap();
        prop_assert_eq!(a.model.to_json(), b.model.to_json());
        prop_assert_eq!(a.log, b.log);
        let fresh = init_learner(ModelKind::Options, hp, seed).unwrap().to_model();
        prop_assert_ne!(a.model.online, fresh.online);
    }
}

// ---------------------------------------------------------------- harness

proptest! {
    #![proptest_config(cases(12))]

    #[test]
    fn episode_return_matches_its_records(n in 0usize..50, seed in any::<u64>()) {
        let cfg = ScenarioConfig {
            max_duration: 20.0,
            ..ScenarioConfig::default()
        };
        let scenario = generate_random_scenario(n, seed, &cfg).unwrap();
        let settings = DriveSettings::default();
        let mut agent = OptionAgent::random(ChaCha8Rng::seed_from_u64(seed));
        let r = run_episode(&scenario, &mut agent, &settings, false).unwrap();
        let params = RewardParams {
            desired_speed: scenario.ego_desired_speed,
            change_penalty: settings.change_penalty,
        };
        let mut total = 0.0;
        for (k, rec) in r.records.iter().enumerate() {
            let end = ((k + 1) * STEPS_PER_DECISION).min(r.speeds.len());
            let expected = reward(r.speeds[end - 1], &params, rec.changed);
            prop_assert_eq!(rec.reward, Some(expected));
            total += expected;
        }
        prop_assert_eq!(total, r.episode_return);
        let mean = r.speeds.iter().sum::<f64>() / r.speeds.len() as f64;
        prop_assert_eq!(mean, r.mean_speed);
        let decisions = r.speeds.len().div_ceil(STEPS_PER_DECISION);
        prop_assert_eq!(r.records.len(), decisions);
    }

    #[test]
    fn options_persist_until_reselected(n in 0usize..50, seed in any::<u64>(), greedy in any::<bool>()) {
        let cfg = ScenarioConfig {
            max_duration: 20.0,
            ..ScenarioConfig::default()
        };
        let scenario = generate_random_scenario(n, seed, &cfg).unwrap();
        let mut agent = if greedy {
            OptionAgent::greedy()
        } else {
            OptionAgent::random(ChaCha8Rng::seed_from_u64(seed))
        };
        let r = run_episode(&scenario, &mut agent, &DriveSettings::default(), false).unwrap();
        prop_assert!(r.records.first().is_none_or(|d| d.selected));
        for pair in r.records.windows(2) {
            let (prev, cur) = (&pair[0], &pair[1]);
            if !cur.selected {
                prop_assert!(!cur.fallback);
                prop_assert_eq!(
                    cur.chosen_candidate().map(|c| c.choice),
                    prev.chosen_candidate().map(|c| c.choice)
                );
                prop_assert!(!cur.changed);
            }
        }
    }
}

// ---------------------------------------------------------------- evaluation

#[test]
fn every_agent_sees_the_same_scenarios() {
    let cfg = EvalConfig {
        densities: vec![10, 30],
        seeds_per_density: 2,
        runs: 2,
        critical: true,
        ..EvalConfig::default()
    };
    let report = evaluate(&[AgentSpec::Greedy, AgentSpec::Random, AgentSpec::Idm], &cfg).unwrap();
    let suite = |agent: &str| -> Vec<(String, Option<usize>, u64)> {
        let r = report.agent(agent).unwrap();
        r.episodes
            .iter()
            .filter(|e| e.member == 0)
            .map(|e| (e.suite.clone(), e.density, e.seed))
            .collect()
    };
    let greedy = suite("greedy");
    assert_eq!(greedy.len(), 2 * 2 + 2);
    assert_eq!(greedy, suite("random"));
    assert_eq!(greedy, suite("idm"));
    let random = report.agent("random").unwrap();
    let member1: Vec<u64> = random
        .episodes
        .iter()
        .filter(|e| e.member == 1)
        .map(|e| e.seed)
        .collect();
    let member0: Vec<u64> = greedy.iter().map(|e| e.2).collect();
    assert_eq!(member0, member1);
}

#[test]
fn mean_speed_matches_the_trace() {
    for seed in 0..4 {
        let scenario = generate_random_scenario(25, seed, &ScenarioConfig::default()).unwrap();
        let mut agent = OptionAgent::greedy();
        let r = run_episode(&scenario, &mut agent, &DriveSettings::default(), true).unwrap();
        let ego: Vec<f64> = r
            .trace
            .as_ref()
            .unwrap()
            .iter()
            .filter(|row| row.id == EGO_ID && row.time > 0.0)
            .map(|row| row.v)
            .collect();
        assert_eq!(ego.len(), r.speeds.len());
        let mean = ego.iter().sum::<f64>() / ego.len() as f64;
        assert!((mean - r.mean_speed).abs() < 1e-12, "{mean} vs {}", r.mean_speed);
    }
}

#[test]
fn logged_choices_come_from_the_logged_candidates() {
    let cfg = CollectConfig::new(CollectKind::RandomOptions, 600, 17);
    let data = collect_transitions(&cfg).unwrap();
    let mut linked = 0;
    for pair in data.windows(2) {
        let (prev, cur) = (&pair[0], &pair[1]);
        if prev.terminal || prev.next_state != cur.state {
            continue;
        }
        let Action::Gap { features, .. } = &cur.action else {
            panic!("options dataset holds a manoeuvre");
        };
        assert!(
            prev.next_gap_candidates.contains(features),
            "{features:?} not among {:?}",
            prev.next_gap_candidates
        );
        linked += 1;
    }
    assert!(linked > 100, "only {linked} linked transitions");
}
