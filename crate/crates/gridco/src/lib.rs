//! Day-ahead electricity market simulation with strategic bidding agents and
//! a learnable transmission-design policy.
//!
//! The crate is organized around a DC-OPF market clearing (`dcopf`) backed by
//! an exact dense-simplex solver (`lp`), a multi-agent bidding environment
//! (`market_env`) trained with MADDPG (`maddpg`, `neural`), a score-function
//! policy over line-capacity designs (`design_policy`), and an orchestration
//! layer (`harness`) that runs co-optimization and the two-stage planning
//! benchmark.

pub mod config;
pub mod dcopf;
pub mod design_policy;
pub mod grid_model;
pub mod harness;
pub mod lp;
pub mod maddpg;
pub mod market_env;
pub mod metrics;
pub mod neural;
pub mod report;
pub mod rng;

pub use grid_model::NetworkCase;
pub use lp::{LinearProgram, LpSolution, LpStatus};
