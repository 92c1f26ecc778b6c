//! Resilience of controlled discrete-time systems: the largest per-step
//! disturbance magnitude under which a feedback controller keeps every
//! closed-loop trajectory inside a finite-horizon specification.
//!
//! Two paths compute it. [`linear`] handles linear systems with linear
//! controllers and polytopic specifications exactly. [`scenario`] handles
//! everything else by sampling disturbance sequences, and attaches a bound on
//! the probability that a fresh sequence breaks the returned controller.

pub mod casestudies;
pub mod cli;
pub mod config;
pub mod dynamics;
pub mod error;
pub mod linear;
pub mod report;
pub mod scenario;
pub mod search;
pub mod specs;

pub use config::ProblemConfig;
pub use dynamics::{
    rollout, ControllerKind, ControllerTemplate, DisturbanceSeq, DynamicsMap, DynamicsRegistry, ParamVector,
    SystemModel, Trajectory,
};
pub use error::{Error, Result};
pub use linear::{fixed_controller_resilience, synthesize_linear, vertex_oracle_resilience, ResilienceResult,
    ResilienceStatus};
pub use scenario::{risk_bound, solve_scenario_program, ScenarioProblem, ScenarioSolution};
pub use specs::{check_traj, margin, InputBox, Polytope, Region, SpecExpr, StageSpec};
