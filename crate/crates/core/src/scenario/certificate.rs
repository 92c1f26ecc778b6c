use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::risk::risk_bound;
use super::sampling::{sample_scenarios, ScenarioSet};
use super::solver::{resolve_from, ScenarioProblem, ScenarioSolution, ScenarioSolverConfig};
use crate::error::{Error, Result};

/// Removal changes epsilon by more than this => support constraint.
pub const SUPPORT_EPS_TOL: f64 = 1e-7;
/// Removal moves any parameter by more than this => support constraint.
pub const SUPPORT_ALPHA_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Complexity {
    pub count: usize,
    /// Positions in the scenario set, ascending.
    pub support: Vec<usize>,
}

/// With confidence `1 - beta`, a fresh scenario violates the solution with
/// probability below `bound`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioCertificate {
    pub scenarios: usize,
    pub complexity: usize,
    pub beta: f64,
    pub bound: f64,
    pub support_indices: Vec<usize>,
}

impl ScenarioCertificate {
    pub fn statement(&self) -> String {
        format!(
            "with confidence {:.6}, P(fresh scenario violates the solution) < {:.6} (M = {}, complexity = {})",
            1.0 - self.beta,
            self.bound,
            self.scenarios,
            self.complexity
        )
    }
}

fn differs(a: &ScenarioSolution, b: &ScenarioSolution) -> bool {
    let eps_gap = if a.epsilon.is_infinite() || b.epsilon.is_infinite() {
        if a.epsilon == b.epsilon {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        (a.epsilon - b.epsilon).abs()
    };
    let alpha_gap = a
        .alpha
        .0
        .iter()
        .zip(&b.alpha.0)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max);
    eps_gap > SUPPORT_EPS_TOL || alpha_gap > SUPPORT_ALPHA_TOL
}

/// Leave-one-out support constraints of `sol`.
///
/// Every re-solve repeats the warm-started refinement from the same
/// initialization `sol.trace.warm_start`, so a scenario that never influences
/// the refinement cannot change the result.
pub fn complexity(
    problem: &ScenarioProblem,
    sol: &ScenarioSolution,
    scenarios: &ScenarioSet,
    cfg: &ScenarioSolverConfig,
) -> Result<Complexity> {
    let warm = &sol.trace.warm_start;
    let again = resolve_from(problem, scenarios, cfg, warm)?;
    if again.epsilon.to_bits() != sol.epsilon.to_bits() || again.alpha != sol.alpha {
        return Err(Error::DeterminismViolation);
    }
    let flags: Vec<bool> = (0..scenarios.len())
        .into_par_iter()
        .map(|i| resolve_from(problem, &scenarios.without(i), cfg, warm).map(|r| differs(&r, sol)))
        .collect::<Result<_>>()?;
    let support: Vec<usize> = flags
        .iter()
        .enumerate()
        .filter_map(|(i, f)| f.then_some(i))
        .collect();
    Ok(Complexity {
        count: support.len(),
        support,
    })
}

/// One certificate per confidence level, sharing one complexity computation.
pub fn certify(
    problem: &ScenarioProblem,
    sol: &ScenarioSolution,
    scenarios: &ScenarioSet,
    betas: &[f64],
    cfg: &ScenarioSolverConfig,
) -> Result<Vec<ScenarioCertificate>> {
    let c = complexity(problem, sol, scenarios, cfg)?;
    certificates_for(&c, scenarios.len(), betas)
}

pub fn certificates_for(c: &Complexity, m: usize, betas: &[f64]) -> Result<Vec<ScenarioCertificate>> {
    betas
        .iter()
        .map(|&beta| {
            Ok(ScenarioCertificate {
                scenarios: m,
                complexity: c.count,
                beta,
                bound: risk_bound(c.count, m, beta)?,
                support_indices: c.support.clone(),
            })
        })
        .collect()
}

/// Fraction of `count` fresh scenarios (drawn with `seed`) violated by `sol`.
pub fn empirical_violation(
    problem: &ScenarioProblem,
    sol: &ScenarioSolution,
    count: usize,
    seed: u64,
) -> Result<f64> {
    let fresh = sample_scenarios(problem.sys.state_dim(), problem.horizon, count, seed);
    let eps = if sol.epsilon.is_finite() { sol.epsilon } else { 0.0 };
    let margins = problem.margins(&sol.alpha, eps, &fresh)?;
    Ok(margins.iter().filter(|m| **m < 0.0).count() as f64 / count as f64)
}
