//! Gap-based highway decision making.
//!
//! The crate couples a small IDM traffic world with a sampling trajectory
//! planner that proposes *reachable gaps* as actions, and a DeepSet
//! Q-network trained offline on logged transitions to choose among them.
//!
//! Module map:
//! - [`world`]: seedable multi-lane microsimulator (IDM traffic, ego setpoint following).
//! - [`trajectory`]: quintic polynomials, ttc/thw safety gates, candidate lattice.
//! - [`gaps`]: gap enumeration, gap features and the reachable set.
//! - [`neural`]: dense layers, DeepSet Q-network, Adam, soft target updates.
//! - [`learn`]: transition dataset and fixed-batch Q-learning.
//! - [`agents`]: option execution and the five selection policies.
//! - [`harness`]: reward, data collection, scenario suites, evaluation and CLI.

pub mod agents;
pub mod error;
pub mod gaps;
pub mod harness;
pub mod learn;
pub mod neural;
pub mod trajectory;
pub mod world;

#[cfg(test)]
mod invariants;

pub use error::{Error, Result};
