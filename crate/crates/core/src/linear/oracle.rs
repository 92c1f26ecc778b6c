//! Brute-force worst-case check over the corners of the disturbance box.
//!
//! Every stage constraint is affine in the disturbance sequence, so its
//! worst case over `[-eps, eps]^{nN}` is attained at a corner. Bisection on
//! `eps` over closed-loop rollouts gives the resilience of a fixed linear
//! controller without going through the Farkas matrices.

use serde::{Deserialize, Serialize};

use crate::dynamics::{rollout, ControllerTemplate, DisturbanceSeq, ParamVector, SystemModel};
use crate::error::{Error, Result};
use crate::specs::StageSpec;

pub const MAX_ORACLE_DIM: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleConfig {
    /// Bisection stops when `hi - lo <= rel_tol * hi`.
    pub rel_tol: f64,
    /// Feasible at this magnitude means unbounded.
    pub max_bracket: f64,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self {
            rel_tol: 1e-8,
            max_bracket: (1u64 << 20) as f64,
        }
    }
}

fn sign_pattern(index: u64, n: usize, horizon: usize, eps: f64) -> Vec<Vec<f64>> {
    (0..horizon)
        .map(|k| {
            (0..n)
                .map(|i| if index >> (k * n + i) & 1 == 1 { eps } else { -eps })
                .collect()
        })
        .collect()
}

/// Whether every corner disturbance of magnitude `eps` keeps the rollout in `spec`.
pub fn all_vertices_satisfy(
    sys: &SystemModel,
    alpha: &ParamVector,
    spec: &StageSpec,
    x0: &[f64],
    eps: f64,
) -> Result<bool> {
    Ok(violating_vertex(sys, alpha, spec, x0, eps)?.is_none())
}

/// First corner (in enumeration order) at magnitude `eps` whose rollout leaves `spec`.
pub fn violating_vertex(
    sys: &SystemModel,
    alpha: &ParamVector,
    spec: &StageSpec,
    x0: &[f64],
    eps: f64,
) -> Result<Option<DisturbanceSeq>> {
    let template = ControllerTemplate::linear(sys.state_dim(), sys.input_dim());
    let (n, horizon) = (sys.state_dim(), spec.horizon());
    if n * horizon > MAX_ORACLE_DIM {
        return Err(Error::OracleTooLarge(n * horizon));
    }
    for index in 0..1u64 << (n * horizon) {
        let d = DisturbanceSeq::Raw(sign_pattern(index, n, horizon, eps));
        let traj = rollout(sys, &template, alpha, x0, &d, horizon)?;
        if !spec.satisfied_by(&traj) {
            return Ok(Some(d));
        }
    }
    Ok(None)
}

/// Largest `eps` at which all corner disturbances satisfy `spec`; `0` when
/// the nominal rollout already fails, `+inf` past `max_bracket`.
pub fn vertex_oracle_resilience(
    sys: &SystemModel,
    spec: &StageSpec,
    x0: &[f64],
    alpha: &ParamVector,
    cfg: &OracleConfig,
) -> Result<f64> {
    if sys.linear_matrices().is_none() {
        return Err(Error::InvalidArgument("vertex oracle needs linear dynamics".into()));
    }
    let nn = sys.state_dim() * spec.horizon();
    if nn > MAX_ORACLE_DIM {
        return Err(Error::OracleTooLarge(nn));
    }
    let ok = |eps: f64| all_vertices_satisfy(sys, alpha, spec, x0, eps);
    if !ok(0.0)? {
        return Ok(0.0);
    }
    let mut lo = 0.0;
    let mut hi = 1.0;
    while ok(hi)? {
        lo = hi;
        hi *= 2.0;
        if hi > cfg.max_bracket {
            return Ok(f64::INFINITY);
        }
    }
    while hi - lo > cfg.rel_tol * hi {
        let mid = 0.5 * (lo + hi);
        if ok(mid)? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(lo)
}
