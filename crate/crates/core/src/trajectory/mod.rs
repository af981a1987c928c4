//! Jerk-optimal candidate trajectories toward gaps, gated by ttc/thw safety checks.

mod planner;
mod poly;
mod safety;

pub use planner::{
    best_trajectory_to_gap, braking_trajectory, check_feasible, check_feasible_with_step,
    plan_to_gap, relevant_vehicles, sample_trajectories, CostWeights, EgoKinematics, GapBound,
    GapRegion, PlannerConfig, Trajectory, TrajectoryCost,
};
pub use poly::{fit_quintic, integral_squared_jerk, Boundary, PolySample, QuinticPoly};
pub use safety::{
    check_sample, predict_constant_velocity, thw, ttc, EgoSample, Feasibility, SafetyParams,
    Violation,
};
