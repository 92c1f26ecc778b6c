use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::farkas::{build_farkas, fixed_controller_resilience, ResilienceStatus, RowDiagnostic};
use crate::dynamics::{ParamVector, SystemModel};
use crate::error::{Error, Result};
use crate::search::{multistart, pick_best, random_starts, SearchConfig, StartTrace};
use crate::specs::StageSpec;

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct Diagnostics {
    pub rows: Vec<RowDiagnostic>,
    pub trace: Vec<StartTrace>,
}

/// Resilience value together with the controller that attains it.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ResilienceResult {
    #[serde(with = "crate::report::f64_or_inf")]
    pub epsilon: f64,
    pub alpha: ParamVector,
    pub status: ResilienceStatus,
    pub diagnostics: Diagnostics,
}

/// Exact resilience of the linear controller `alpha` (row-major `alpha_1`, then `alpha_2`).
pub fn controller_resilience(
    sys: &SystemModel,
    spec: &StageSpec,
    x0: &[f64],
    alpha: &ParamVector,
) -> Result<(f64, ResilienceStatus)> {
    let (a, b) = sys
        .linear_matrices()
        .ok_or_else(|| Error::InvalidArgument("exact path needs linear dynamics".into()))?;
    let (gain, offset) = alpha.linear_parts(sys.state_dim(), sys.input_dim())?;
    let mats = build_farkas(a, b, spec, x0, &gain, &offset)?;
    Ok(fixed_controller_resilience(&mats))
}

/// [`controller_resilience`] with per-row diagnostics, packaged like a synthesis result.
pub fn evaluate_linear(sys: &SystemModel, spec: &StageSpec, x0: &[f64], alpha: &ParamVector) -> Result<ResilienceResult> {
    let (a, b) = sys
        .linear_matrices()
        .ok_or_else(|| Error::InvalidArgument("exact path needs linear dynamics".into()))?;
    finish(a, b, spec, x0, alpha.clone(), Vec::new())
}

/// Above this the offset problem is treated as unbounded.
const EPS_CAP: f64 = 1e9;

/// Optimal offset for a fixed gain.
///
/// The row weights `|row_r(E)|_1` depend on the gain only, while the slacks
/// are affine in the offset, `F(alpha_2) = F(0) + C alpha_2`. The best offset
/// therefore solves the linear program
///
/// ```text
/// max t   s.t.   F_r(alpha_2) >= t * w_r   (w_r > 0),   F_r(alpha_2) >= 0   (w_r = 0)
/// ```
///
/// Returns `(t, alpha_2)`; `t < 0` means no offset makes the nominal
/// trajectory feasible. `None` if rows with zero weight cannot be satisfied.
pub fn best_offset(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    spec: &StageSpec,
    x0: &[f64],
    gain: &DMatrix<f64>,
) -> Result<Option<(f64, Vec<f64>)>> {
    use microlp::{ComparisonOp, OptimizationDirection, Problem, SolveOutcome};

    let m = b.ncols();
    let base = build_farkas(a, b, spec, x0, gain, &vec![0.0; m])?;
    let weights = base.row_weights();
    let mut cols = Vec::with_capacity(m);
    for i in 0..m {
        let mut unit = vec![0.0; m];
        unit[i] = 1.0;
        let shifted = build_farkas(a, b, spec, x0, gain, &unit)?;
        cols.push(&shifted.f - &base.f);
    }

    let mut lp = Problem::new(OptimizationDirection::Maximize);
    let t = lp.add_var(1.0, (f64::NEG_INFINITY, EPS_CAP));
    let offset: Vec<_> = (0..m).map(|_| lp.add_var(0.0, (f64::NEG_INFINITY, f64::INFINITY))).collect();
    for (r, w) in weights.iter().enumerate() {
        // C_r alpha_2 - w_r t >= -F_r(0), each row scaled to unit size
        let scale = cols
            .iter()
            .map(|c| c[r].abs())
            .fold(w.abs().max(base.f[r].abs()), f64::max);
        if scale == 0.0 {
            continue;
        }
        let mut expr: Vec<_> = offset.iter().zip(&cols).map(|(v, c)| (*v, c[r] / scale)).collect();
        if *w > 0.0 {
            expr.push((t, -w / scale));
        }
        lp.add_constraint(expr.as_slice(), ComparisonOp::Ge, -base.f[r] / scale);
    }
    match lp.solve() {
        Ok(SolveOutcome::Solution(sol)) => Ok(Some((sol[t], offset.iter().map(|v| sol[*v]).collect()))),
        _ => Ok(None),
    }
}

/// Search objective for a gain: the optimal-offset resilience, or a
/// negative penalty when no offset keeps the nominal trajectory feasible.
fn gain_value(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    spec: &StageSpec,
    x0: &[f64],
    gain: &DMatrix<f64>,
) -> (f64, Vec<f64>) {
    let m = b.ncols();
    if gain.iter().any(|v| !v.is_finite()) {
        return (f64::NEG_INFINITY, vec![0.0; m]);
    }
    match best_offset(a, b, spec, x0, gain) {
        Ok(Some((t, offset))) if t.is_finite() => (if t >= EPS_CAP { f64::INFINITY } else { t }, offset),
        Ok(_) => {
            let zero = vec![0.0; m];
            let penalty = build_farkas(a, b, spec, x0, gain, &zero)
                .map(|mats| {
                    let (count, worst) = mats.nominal_violation();
                    -(1.0 + count as f64 + worst)
                })
                .unwrap_or(f64::NEG_INFINITY);
            (penalty, zero)
        }
        Err(_) => (f64::NEG_INFINITY, vec![0.0; m]),
    }
}

/// Deadbeat gain `-B⁺A`.
fn deadbeat_gain(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let pinv = b.clone().pseudo_inverse(1e-12).ok()?;
    Some(-(&pinv * a))
}

/// Maximizes the exact resilience over linear controllers.
///
/// The offset is optimal for every candidate gain (a small linear program);
/// the gain is found by multi-start Nelder–Mead over its `m x n` entries,
/// started at zero, at the deadbeat gain `-B⁺A` and at random points. Every
/// candidate is scored exactly, so the result is a certified lower bound on
/// the optimum over all linear controllers.
pub fn synthesize_linear(
    sys: &SystemModel,
    spec: &StageSpec,
    x0: &[f64],
    cfg: &SearchConfig,
) -> Result<ResilienceResult> {
    let (a, b) = sys
        .linear_matrices()
        .ok_or_else(|| Error::InvalidArgument("exact path needs linear dynamics".into()))?;
    let (n, m) = (sys.state_dim(), sys.input_dim());
    if spec.state_dim() != n || x0.len() != n {
        return Err(Error::Dimension(format!(
            "spec dimension {} and x0 length {} must equal state dimension {n}",
            spec.state_dim(),
            x0.len()
        )));
    }
    let as_gain = |z: &[f64]| DMatrix::from_row_slice(m, n, z);
    let to_alpha = |z: &[f64], offset: &[f64]| ParamVector::from_linear(&as_gain(z), offset);

    let mut starts = vec![("zero".to_string(), vec![0.0; m * n])];
    if let Some(k) = deadbeat_gain(a, b) {
        starts.push(("deadbeat".to_string(), k.transpose().as_slice().to_vec()));
    }
    starts.extend(random_starts(m * n, cfg));

    // Nothing can beat an unbounded start.
    for (i, (origin, z)) in starts.iter().enumerate() {
        let (value, offset) = gain_value(a, b, spec, x0, &as_gain(z));
        if value == f64::INFINITY {
            let trace = vec![StartTrace {
                start_index: i,
                origin: origin.clone(),
                initial_value: value,
                final_value: value,
                evals: 1,
                converged: true,
            }];
            let r = finish(a, b, spec, x0, to_alpha(z, &offset), trace.clone())?;
            if r.status == ResilienceStatus::Unbounded {
                return Ok(r);
            }
        }
    }

    let f = |z: &[f64]| -gain_value(a, b, spec, x0, &as_gain(z)).0;
    let runs = multistart(&f, &starts, cfg);
    let mut candidates = Vec::with_capacity(runs.len());
    for (r, _) in &runs {
        let (_, offset) = gain_value(a, b, spec, x0, &as_gain(&r.x));
        let alpha = to_alpha(&r.x, &offset);
        let (gain, off) = alpha.linear_parts(n, m)?;
        let exact = fixed_controller_resilience(&build_farkas(a, b, spec, x0, &gain, &off)?);
        let score = match exact {
            (_, ResilienceStatus::NominalInfeasible) => -r.value.abs() - 1.0,
            (eps, _) => eps,
        };
        candidates.push((score, alpha));
    }
    let best = pick_best(&candidates).expect("at least one start");
    let trace = runs.into_iter().map(|(_, t)| t).collect();
    finish(a, b, spec, x0, candidates[best].1.clone(), trace)
}

fn finish(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    spec: &StageSpec,
    x0: &[f64],
    alpha: ParamVector,
    trace: Vec<StartTrace>,
) -> Result<ResilienceResult> {
    let (n, m) = (a.nrows(), b.ncols());
    let (gain, offset) = alpha.linear_parts(n, m)?;
    let mats = build_farkas(a, b, spec, x0, &gain, &offset)?;
    let (epsilon, status) = fixed_controller_resilience(&mats);
    Ok(ResilienceResult {
        epsilon,
        alpha,
        status,
        diagnostics: Diagnostics {
            rows: mats.diagnostics(),
            trace,
        },
    })
}
