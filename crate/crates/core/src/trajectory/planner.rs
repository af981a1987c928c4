use serde::{Deserialize, Serialize};

use super::poly::{fit_quintic, integral_squared_jerk, QuinticPoly};
use super::safety::{check_sample, EgoSample, Feasibility, SafetyParams};
use crate::world::{EgoSetpoint, VehicleState, World, DEFAULT_LANE_WIDTH, SIM_DT};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostWeights {
    pub jerk: f64,
    pub lane_dev: f64,
    pub speed_dev: f64,
    pub gap_fit: f64,
}

impl Default for CostWeights {
    fn default() -> Self {
        Self {
            jerk: 1.0,
            lane_dev: 1.0,
            speed_dev: 10.0,
            gap_fit: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryCost {
    pub jerk_long: f64,
    pub jerk_lat: f64,
    pub lane_center_dev: f64,
    pub speed_dev: f64,
    pub gap_fit: f64,
    pub total: f64,
}

impl TrajectoryCost {
    pub fn weighted(
        w: &CostWeights,
        jerk_long: f64,
        jerk_lat: f64,
        lane_center_dev: f64,
        speed_dev: f64,
        gap_fit: f64,
    ) -> Self {
        let total = w.jerk * (jerk_long + jerk_lat)
            + w.lane_dev * lane_center_dev
            + w.speed_dev * speed_dev
            + w.gap_fit * gap_fit;
        Self {
            jerk_long,
            jerk_lat,
            lane_center_dev,
            speed_dev,
            gap_fit,
            total,
        }
    }
}

/// Ego state the planner starts from (lateral measured from the lane-0 center).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EgoKinematics {
    pub s: f64,
    pub v: f64,
    pub a: f64,
    pub lateral: f64,
    pub lateral_v: f64,
    pub lateral_a: f64,
    pub lane_index: usize,
    pub length: f64,
}

impl EgoKinematics {
    pub fn from_world(world: &World) -> Self {
        let e = world.ego();
        let st = world.state();
        Self {
            s: e.s,
            v: e.v,
            a: e.a,
            lateral: e.lateral(world.lane_width()),
            lateral_v: st.ego_lateral_velocity,
            lateral_a: st.ego_lateral_acceleration,
            lane_index: e.lane_index,
            length: e.length,
        }
    }

    /// Ego at the center of `state.lane_index` with no lateral motion.
    pub fn from_vehicle(state: &VehicleState, lane_width: f64) -> Self {
        Self {
            s: state.s,
            v: state.v,
            a: state.a,
            lateral: state.lateral(lane_width),
            lateral_v: 0.0,
            lateral_a: 0.0,
            lane_index: state.lane_index,
            length: state.length,
        }
    }
}

/// A vehicle bounding a gap, captured at decision time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GapBound {
    pub id: u32,
    pub s: f64,
    pub v: f64,
    pub length: f64,
}

impl From<&VehicleState> for GapBound {
    fn from(v: &VehicleState) -> Self {
        Self {
            id: v.id,
            s: v.s,
            v: v.v,
            length: v.length,
        }
    }
}

/// Longitudinal region a plan must end in: the space between two predicted bounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GapRegion {
    pub lane: usize,
    pub follower: Option<GapBound>,
    pub leader: Option<GapBound>,
}

impl GapRegion {
    pub fn open(lane: usize) -> Self {
        Self {
            lane,
            follower: None,
            leader: None,
        }
    }

    /// Admissible ego front positions after `t` seconds (open sides are infinite).
    pub fn interval(&self, t: f64, ego_len: f64) -> (f64, f64) {
        let lo = self
            .follower
            .map_or(f64::NEG_INFINITY, |f| f.s + f.v * t + ego_len);
        let hi = self
            .leader
            .map_or(f64::INFINITY, |l| l.s - l.length + l.v * t);
        (lo, hi)
    }

    pub fn contains(&self, s: f64, t: f64, ego_len: f64) -> bool {
        let (lo, hi) = self.interval(t, ego_len);
        s >= lo && s <= hi
    }

    /// Speed the gap travels at: mean of its bounds, the single bound, or `fallback`.
    pub fn reference_speed(&self, fallback: f64) -> f64 {
        match (self.follower, self.leader) {
            (Some(f), Some(l)) => 0.5 * (f.v + l.v),
            (Some(b), None) | (None, Some(b)) => b.v,
            (None, None) => fallback,
        }
    }

    fn center(&self, t: f64, ego_len: f64) -> Option<f64> {
        match (self.follower, self.leader) {
            (Some(_), Some(_)) => {
                let (lo, hi) = self.interval(t, ego_len);
                Some(0.5 * (lo + hi))
            }
            _ => None,
        }
    }
}

/// Sampling lattice, weights and limits of the planner.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlannerConfig {
    pub durations: Vec<f64>,
    /// Terminal speeds as fractions of `min(desired, v_max)`.
    pub speed_fractions: Vec<f64>,
    /// Adds the gap's reference speed to the terminal-speed lattice.
    pub include_gap_speed: bool,
    /// Half-width of the terminal-position window around the natural end point.
    pub offset_half_width: f64,
    pub offset_count: usize,
    pub check_dt: f64,
    pub lane_width: f64,
    pub lane_count: usize,
    pub weights: CostWeights,
    pub safety: SafetyParams,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        Self {
            durations: vec![2.0, 3.0, 4.0, 5.0, 6.0],
            speed_fractions: vec![0.6, 0.8, 1.0, 1.1],
            include_gap_speed: true,
            offset_half_width: 20.0,
            offset_count: 5,
            check_dt: SIM_DT,
            lane_width: DEFAULT_LANE_WIDTH,
            lane_count: 3,
            weights: CostWeights::default(),
            safety: SafetyParams::default(),
        }
    }
}

impl PlannerConfig {
    pub fn terminal_speeds(&self, desired_speed: f64, gap_speed: f64) -> Vec<f64> {
        let cap = desired_speed.min(self.safety.v_max);
        let mut out: Vec<f64> = self
            .speed_fractions
            .iter()
            .map(|f| (f * cap).clamp(0.0, self.safety.v_max))
            .collect();
        if self.include_gap_speed {
            out.push(gap_speed.clamp(0.0, self.safety.v_max));
        }
        out
    }

    pub fn lattice_size(&self) -> usize {
        self.durations.len()
            * (self.speed_fractions.len() + usize::from(self.include_gap_speed))
            * self.offset_count
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    /// Front-bumper position over time.
    pub longitudinal: QuinticPoly,
    /// Lateral position (from the lane-0 center) over time.
    pub lateral: QuinticPoly,
    pub duration: f64,
    pub start_lane: usize,
    pub target_lane: usize,
    pub lane_width: f64,
    pub lane_count: usize,
    pub cost: TrajectoryCost,
    pub feasibility: Feasibility,
}

impl Trajectory {
    pub fn sample(&self, t: f64) -> EgoSample {
        let t = t.clamp(0.0, self.duration);
        let lon = self.longitudinal.sample_unchecked(t);
        let lat = self.lateral.sample_unchecked(t);
        EgoSample {
            t,
            s: lon.p,
            v: lon.v,
            a: lon.a,
            lateral: lat.p,
        }
    }

    pub fn setpoint_at(&self, t: f64) -> EgoSetpoint {
        let t = t.clamp(0.0, self.duration);
        let lon = self.longitudinal.sample_unchecked(t);
        let lat = self.lateral.sample_unchecked(t);
        EgoSetpoint {
            s: lon.p,
            lateral: lat.p,
            v: lon.v,
            a: lon.a,
            lateral_v: lat.v,
            lateral_a: lat.a,
        }
    }

    pub fn start_s(&self) -> f64 {
        self.longitudinal.coeffs[0]
    }

    pub fn end_s(&self) -> f64 {
        self.longitudinal.sample_unchecked(self.duration).p
    }

    pub fn end_speed(&self) -> f64 {
        self.longitudinal.sample_unchecked(self.duration).v
    }

    /// Distance covered divided by duration.
    pub fn mean_speed(&self) -> f64 {
        (self.end_s() - self.start_s()) / self.duration
    }

    /// Mean longitudinal acceleration over the whole plan.
    pub fn mean_acceleration(&self) -> f64 {
        (self.end_speed() - self.longitudinal.coeffs[1]) / self.duration
    }

    pub fn sample_count(&self, check_dt: f64) -> usize {
        (self.duration / check_dt).round() as usize
    }
}

/// Samples the plan every `check_dt` (0.1 s by default) against speed,
/// acceleration, ttc, thw and overlap with constant-velocity predictions.
///
/// Plans shorter than the safety horizon are continued at their terminal
/// speed up to the horizon and the continuation is checked as well.
pub fn check_feasible(
    traj: &Trajectory,
    ego_length: f64,
    relevant: &[VehicleState],
    safety: &SafetyParams,
) -> Feasibility {
    check_feasible_with_step(traj, ego_length, relevant, safety, SIM_DT)
}

pub fn check_feasible_with_step(
    traj: &Trajectory,
    ego_length: f64,
    relevant: &[VehicleState],
    safety: &SafetyParams,
    check_dt: f64,
) -> Feasibility {
    let n = traj.sample_count(check_dt);
    for k in 0..=n {
        let sample = traj.sample(k as f64 * check_dt);
        if let Some(reason) = check_sample(
            &sample,
            ego_length,
            relevant,
            safety,
            traj.lane_width,
            traj.lane_count,
        ) {
            return Feasibility::Infeasible {
                reason,
                time: sample.t,
            };
        }
    }
    let end = traj.sample(traj.duration);
    let tail = ((safety.horizon - traj.duration) / check_dt).round().max(0.0) as usize;
    for k in 1..=tail {
        let dt = k as f64 * check_dt;
        let sample = EgoSample {
            t: traj.duration + dt,
            s: end.s + end.v * dt,
            v: end.v,
            a: 0.0,
            lateral: end.lateral,
        };
        if let Some(reason) = check_sample(
            &sample,
            ego_length,
            relevant,
            safety,
            traj.lane_width,
            traj.lane_count,
        ) {
            return Feasibility::Infeasible {
                reason,
                time: sample.t,
            };
        }
    }
    Feasibility::Feasible
}

/// Vehicles on the start lane or the target lane.
pub fn relevant_vehicles(view: &[VehicleState], start_lane: usize, target_lane: usize) -> Vec<VehicleState> {
    view.iter()
        .filter(|v| v.lane_index == start_lane || v.lane_index == target_lane)
        .copied()
        .collect()
}

/// Terminal front positions for one (duration, terminal speed) pair.
fn terminal_positions(
    ego: &EgoKinematics,
    region: &GapRegion,
    duration: f64,
    v_end: f64,
    cfg: &PlannerConfig,
) -> Vec<f64> {
    let natural = ego.s + 0.5 * (ego.v + v_end) * duration;
    let (lo, hi) = region.interval(duration, ego.length);
    let thw = cfg.safety.thw_min;
    let safe_lo = region.follower.map_or(f64::NEG_INFINITY, |f| lo + thw * f.v);
    let safe_hi = region.leader.map_or(f64::INFINITY, |_| hi - thw * v_end);
    let w = cfg.offset_half_width;
    let (a, b) = if safe_lo > safe_hi {
        // too short to hold the ego at a safe headway; aim at the middle
        let mid = if lo.is_finite() && hi.is_finite() {
            0.5 * (lo + hi)
        } else {
            natural
        };
        (mid, mid)
    } else if safe_lo > natural + w {
        (safe_lo, safe_hi.min(safe_lo + 2.0 * w))
    } else if safe_hi < natural - w {
        (safe_lo.max(safe_hi - 2.0 * w), safe_hi)
    } else {
        (safe_lo.max(natural - w), safe_hi.min(natural + w))
    };
    let n = cfg.offset_count.max(1);
    if n == 1 {
        return vec![0.5 * (a + b)];
    }
    (0..n)
        .map(|k| a + (b - a) * k as f64 / (n - 1) as f64)
        .collect()
}

fn lane_center_deviation(lateral: &QuinticPoly, target: f64, dt: f64) -> f64 {
    let n = (lateral.duration / dt).round().max(1.0) as usize;
    let h = lateral.duration / n as f64;
    let mut acc = 0.0;
    let mut prev = (lateral.sample_unchecked(0.0).p - target).abs();
    for k in 1..=n {
        let cur = (lateral.sample_unchecked(k as f64 * h).p - target).abs();
        acc += 0.5 * (prev + cur) * h;
        prev = cur;
    }
    acc
}

/// Unchecked candidate lattice toward `region`.
fn build_candidates(
    ego: &EgoKinematics,
    region: &GapRegion,
    desired_speed: f64,
    cfg: &PlannerConfig,
) -> Result<Vec<Trajectory>> {
    if region.lane >= cfg.lane_count {
        return Err(Error::InvalidArgument(format!(
            "lane {} outside road with {} lanes",
            region.lane, cfg.lane_count
        )));
    }
    if region.lane.abs_diff(ego.lane_index) > 1 {
        return Err(Error::NonAdjacentLane {
            current: ego.lane_index,
            target: region.lane,
        });
    }
    let target_y = region.lane as f64 * cfg.lane_width;
    let gap_speed = region.reference_speed(ego.v);
    let speeds = cfg.terminal_speeds(desired_speed, gap_speed);
    let mut out = Vec::with_capacity(cfg.lattice_size());
    for &duration in &cfg.durations {
        let lateral = fit_quintic(
            (ego.lateral, ego.lateral_v, ego.lateral_a),
            (target_y, 0.0, 0.0),
            duration,
        )?;
        let jerk_lat = integral_squared_jerk(&lateral);
        let lane_dev = lane_center_deviation(&lateral, target_y, cfg.check_dt);
        for &v_end in &speeds {
            for s_end in terminal_positions(ego, region, duration, v_end, cfg) {
                let longitudinal = fit_quintic((ego.s, ego.v, ego.a), (s_end, v_end, 0.0), duration)?;
                let gap_fit = region
                    .center(duration, ego.length)
                    .map_or(0.0, |c| (s_end - c).abs());
                let cost = TrajectoryCost::weighted(
                    &cfg.weights,
                    integral_squared_jerk(&longitudinal),
                    jerk_lat,
                    lane_dev,
                    (v_end - desired_speed).abs(),
                    gap_fit,
                );
                out.push(Trajectory {
                    longitudinal,
                    lateral,
                    duration,
                    start_lane: ego.lane_index,
                    target_lane: region.lane,
                    lane_width: cfg.lane_width,
                    lane_count: cfg.lane_count,
                    cost,
                    feasibility: Feasibility::Unchecked,
                });
            }
        }
    }
    Ok(out)
}

/// Full candidate lattice toward `region`, every candidate checked for feasibility.
///
/// `view` may hold any sensed vehicles; only those on the start and target
/// lanes are considered.
pub fn sample_trajectories(
    ego: &EgoKinematics,
    region: &GapRegion,
    desired_speed: f64,
    view: &[VehicleState],
    cfg: &PlannerConfig,
) -> Result<Vec<Trajectory>> {
    let relevant = relevant_vehicles(view, ego.lane_index, region.lane);
    let mut out = build_candidates(ego, region, desired_speed, cfg)?;
    for traj in &mut out {
        traj.feasibility =
            check_feasible_with_step(traj, ego.length, &relevant, &cfg.safety, cfg.check_dt);
    }
    Ok(out)
}

fn rank_key(t: &Trajectory) -> (f64, f64, f64) {
    (t.cost.total, t.duration, t.cost.jerk_long)
}

fn rank_cmp(a: &Trajectory, b: &Trajectory) -> std::cmp::Ordering {
    let (ka, kb) = (rank_key(a), rank_key(b));
    ka.0.total_cmp(&kb.0)
        .then(ka.1.total_cmp(&kb.1))
        .then(ka.2.total_cmp(&kb.2))
}

/// Cheapest feasible candidate that ends inside the region; ties go to the
/// shorter duration, then the lower longitudinal jerk.
pub fn best_trajectory_to_gap(
    candidates: &[Trajectory],
    region: &GapRegion,
    ego_length: f64,
) -> Option<Trajectory> {
    candidates
        .iter()
        .filter(|t| t.feasibility.is_feasible())
        .filter(|t| t.target_lane == region.lane)
        .filter(|t| region.contains(t.end_s(), t.duration, ego_length))
        .min_by(|a, b| rank_cmp(a, b))
        .cloned()
}

/// Same result as [`sample_trajectories`] followed by [`best_trajectory_to_gap`],
/// but checks feasibility lazily in cost order.
pub fn plan_to_gap(
    ego: &EgoKinematics,
    region: &GapRegion,
    desired_speed: f64,
    view: &[VehicleState],
    cfg: &PlannerConfig,
) -> Result<Option<Trajectory>> {
    let relevant = relevant_vehicles(view, ego.lane_index, region.lane);
    let mut candidates: Vec<Trajectory> = build_candidates(ego, region, desired_speed, cfg)?
        .into_iter()
        .filter(|t| region.contains(t.end_s(), t.duration, ego.length))
        .collect();
    candidates.sort_by(rank_cmp);
    for mut traj in candidates {
        let f = check_feasible_with_step(&traj, ego.length, &relevant, &cfg.safety, cfg.check_dt);
        if f.is_feasible() {
            traj.feasibility = f;
            return Ok(Some(traj));
        }
    }
    Ok(None)
}

/// Keep-lane plan holding a constant deceleration for `duration` (speed floored at zero);
/// the lateral part settles on the nearest lane center.
pub fn braking_trajectory(
    ego: &EgoKinematics,
    decel: f64,
    duration: f64,
    cfg: &PlannerConfig,
) -> Trajectory {
    let decel = decel.abs();
    // stop time if we would reach zero speed within the plan
    let t_stop = if decel > 0.0 { ego.v / decel } else { f64::INFINITY };
    let longitudinal = if t_stop >= duration {
        QuinticPoly {
            coeffs: [ego.s, ego.v, -0.5 * decel, 0.0, 0.0, 0.0],
            duration,
        }
    } else {
        // would stop inside the window: spread the stop over the whole plan
        let stop = ego.s + 0.5 * ego.v * duration;
        fit_quintic((ego.s, ego.v, ego.a.min(0.0)), (stop, 0.0, 0.0), duration)
            .expect("positive duration")
    };
    let lane = (ego.lateral / cfg.lane_width)
        .round()
        .clamp(0.0, (cfg.lane_count - 1) as f64) as usize;
    let target_y = lane as f64 * cfg.lane_width;
    let settle = duration.max(3.0);
    let lateral_full = fit_quintic(
        (ego.lateral, ego.lateral_v, ego.lateral_a),
        (target_y, 0.0, 0.0),
        settle,
    )
    .expect("positive duration");
    // lateral is only ever sampled inside `duration`
    let lateral = QuinticPoly {
        coeffs: lateral_full.coeffs,
        duration,
    };
    let cost = TrajectoryCost::weighted(&cfg.weights, integral_squared_jerk(&longitudinal), integral_squared_jerk(&lateral), 0.0, 0.0, 0.0);
    Trajectory {
        longitudinal,
        lateral,
        duration,
        start_lane: ego.lane_index,
        target_lane: lane,
        lane_width: cfg.lane_width,
        lane_count: cfg.lane_count,
        cost,
        feasibility: Feasibility::Unchecked,
    }
}
