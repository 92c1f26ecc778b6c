//! Scenario approximation of the resilience metric with a probabilistic
//! certificate.
//!
//! The universally quantified disturbance is replaced by `M` sampled
//! normalized sequences `delta_i`; the sampled program maximizes `eps` such
//! that every rollout under `eps * delta_i` meets the specification and the
//! input bounds. The number of support scenarios then indexes the
//! violation-probability bound returned by [`risk_bound`].

mod certificate;
mod risk;
mod sampling;
mod solver;

pub use certificate::{
    certificates_for, certify, complexity, empirical_violation, Complexity, ScenarioCertificate, SUPPORT_ALPHA_TOL,
    SUPPORT_EPS_TOL,
};
pub use risk::{ln_binomial, log_residual, risk_bound, ROOT_TOL};
pub use sampling::{sample_scenarios, uniform_draw, Measure, ScenarioSet};
pub use solver::{
    max_feasible_epsilon, resolve_from, solve_scenario_program, InnerValue, ScenarioProblem, ScenarioSolution,
    ScenarioSolverConfig, SolverTrace,
};
