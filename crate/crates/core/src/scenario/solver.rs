use serde::{Deserialize, Serialize};

use super::sampling::ScenarioSet;
use crate::dynamics::{rollout_into, ControllerTemplate, DistView, ParamVector, SystemModel, Trajectory};
use crate::error::{Error, Result};
use crate::linear::ResilienceStatus;
use crate::search::{
    multistart, nelder_mead_restarting, pick_best, random_starts, ParamCoords, SearchConfig, StartTrace,
};
use crate::specs::{margin_states, InputBox, SpecExpr};

/// Closed-loop problem shared by every scenario: system, controller template,
/// initial state, specification and input bounds.
#[derive(Debug, Clone)]
pub struct ScenarioProblem {
    pub sys: SystemModel,
    pub template: ControllerTemplate,
    pub x0: Vec<f64>,
    pub spec: SpecExpr,
    pub input_box: InputBox,
    pub horizon: usize,
}

impl ScenarioProblem {
    pub fn new(
        sys: SystemModel,
        template: ControllerTemplate,
        x0: Vec<f64>,
        spec: SpecExpr,
        input_box: InputBox,
        horizon: usize,
    ) -> Result<Self> {
        let (n, m) = (sys.state_dim(), sys.input_dim());
        if template.state_dim() != n || template.input_dim() != m {
            return Err(Error::Dimension(format!(
                "template is {}->{}, system is {n}->{m}",
                template.state_dim(),
                template.input_dim()
            )));
        }
        if x0.len() != n {
            return Err(Error::Dimension(format!("x0 has length {}, expected {n}", x0.len())));
        }
        if input_box.dim() != m {
            return Err(Error::Dimension(format!(
                "input box has dimension {}, expected {m}",
                input_box.dim()
            )));
        }
        spec.validate(horizon, n)?;
        Ok(Self {
            sys,
            template,
            x0,
            spec,
            input_box,
            horizon,
        })
    }

    fn scratch(&self) -> Trajectory {
        Trajectory::zeroed(self.sys.state_dim(), self.sys.input_dim(), self.horizon)
    }

    fn check_scenarios(&self, scenarios: &ScenarioSet) -> Result<()> {
        let n = self.sys.state_dim();
        let ok = scenarios
            .deltas
            .iter()
            .all(|d| d.len() == self.horizon && d.iter().all(|v| v.len() == n));
        if !ok {
            return Err(Error::Dimension(format!(
                "scenarios must have {} steps of length {n}",
                self.horizon
            )));
        }
        Ok(())
    }

    fn margin_with(&self, alpha: &[f64], view: DistView<'_>, traj: &mut Trajectory) -> f64 {
        if rollout_into(&self.sys, &self.template, alpha, &self.x0, view, traj).is_err() {
            return f64::NEG_INFINITY;
        }
        let spec = margin_states(&self.spec, &traj.states);
        let input = traj
            .inputs
            .iter()
            .map(|u| self.input_box.margin(u))
            .fold(f64::INFINITY, f64::min);
        spec.min(input)
    }

    /// Margin of one scenario: the smaller of the specification margin and
    /// the input-box margin; `-inf` if the rollout diverges.
    pub fn scenario_margin(&self, alpha: &ParamVector, eps: f64, delta: &[Vec<f64>]) -> Result<f64> {
        self.template.check(alpha)?;
        if delta.len() != self.horizon || delta.iter().any(|v| v.len() != self.sys.state_dim()) {
            return Err(Error::Dimension("scenario shape does not match the problem".into()));
        }
        let mut traj = self.scratch();
        Ok(self.margin_with(
            alpha.as_slice(),
            DistView::Scaled {
                deltas: delta,
                epsilon: eps,
            },
            &mut traj,
        ))
    }

    pub fn scenario_feasible(&self, alpha: &ParamVector, eps: f64, delta: &[Vec<f64>]) -> Result<(bool, f64)> {
        let m = self.scenario_margin(alpha, eps, delta)?;
        Ok((m >= 0.0, m))
    }

    pub fn margins(&self, alpha: &ParamVector, eps: f64, scenarios: &ScenarioSet) -> Result<Vec<f64>> {
        self.template.check(alpha)?;
        self.check_scenarios(scenarios)?;
        let mut traj = self.scratch();
        Ok(scenarios
            .deltas
            .iter()
            .map(|d| {
                self.margin_with(
                    alpha.as_slice(),
                    DistView::Scaled {
                        deltas: d,
                        epsilon: eps,
                    },
                    &mut traj,
                )
            })
            .collect())
    }

    fn all_feasible(&self, alpha: &[f64], eps: f64, scenarios: &ScenarioSet, traj: &mut Trajectory) -> bool {
        scenarios.deltas.iter().all(|d| {
            self.margin_with(
                alpha,
                DistView::Scaled {
                    deltas: d,
                    epsilon: eps,
                },
                traj,
            ) >= 0.0
        })
    }

    fn nominal(&self, alpha: &[f64], traj: &mut Trajectory) -> Option<f64> {
        let zero = vec![vec![0.0; self.sys.state_dim()]; self.horizon];
        let ok = self.margin_with(
            alpha,
            DistView::Scaled {
                deltas: &zero,
                epsilon: 0.0,
            },
            traj,
        );
        (ok >= 0.0).then_some(ok)
    }

    /// Penalty for a controller whose nominal rollout fails: minus the number
    /// of failed top-level conjuncts and input bounds, minus the worst
    /// violation (input violations scaled by `input_scale`).
    fn nominal_penalty(&self, alpha: &[f64], input_scale: f64, traj: &mut Trajectory) -> f64 {
        let zero = vec![vec![0.0; self.sys.state_dim()]; self.horizon];
        let view = DistView::Scaled {
            deltas: &zero,
            epsilon: 0.0,
        };
        if rollout_into(&self.sys, &self.template, alpha, &self.x0, view, traj).is_err() {
            return -1e12;
        }
        let parts: Vec<f64> = match &self.spec {
            SpecExpr::And(c) => c.iter().map(|e| margin_states(e, &traj.states)).collect(),
            e => vec![margin_states(e, &traj.states)],
        };
        let mut count = parts.iter().filter(|m| **m < 0.0).count();
        let mut worst = parts.iter().fold(0.0f64, |w, m| w.max(-m));
        for u in &traj.inputs {
            for (i, v) in u.iter().enumerate() {
                let over = (self.input_box.lower()[i] - v).max(v - self.input_box.upper()[i]);
                if over > 0.0 {
                    count += 1;
                    worst = worst.max(over / input_scale);
                }
            }
        }
        -(count.max(1) as f64 + worst)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioSolverConfig {
    /// Global phase.
    pub search: SearchConfig,
    /// Initial simplex edge of the warm-started refinement.
    pub refine_step: f64,
    pub refine_evals: usize,
    /// Uniform grid points over the bracket for the monotone envelope.
    pub grid_points: usize,
    pub eps_hi: f64,
    pub max_doublings: u32,
    /// Absolute bisection tolerance on epsilon.
    pub bisection_tol: f64,
    /// Search-coordinate scale; defaults to half the widest finite input range, else 1.
    pub input_scale: Option<f64>,
    /// Extra start for the global phase.
    pub initial_alpha: Option<ParamVector>,
}

impl Default for ScenarioSolverConfig {
    fn default() -> Self {
        Self {
            search: SearchConfig::default(),
            refine_step: 0.02,
            refine_evals: 1500,
            grid_points: 64,
            eps_hi: 1.0,
            max_doublings: 20,
            bisection_tol: 1e-10,
            input_scale: None,
            initial_alpha: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolverTrace {
    pub starts: Vec<StartTrace>,
    /// Global-phase incumbent the refinement starts from.
    pub warm_start: ParamVector,
    pub refine_evals: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScenarioSolution {
    #[serde(with = "crate::report::f64_or_inf")]
    pub epsilon: f64,
    pub alpha: ParamVector,
    pub status: ResilienceStatus,
    /// Per-scenario margins at `(epsilon, alpha)`.
    #[serde(with = "crate::report::vec_f64_or_inf")]
    pub margins: Vec<f64>,
    pub trace: SolverTrace,
}

/// Outcome of the inner line search for a fixed controller.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InnerValue {
    Feasible(f64),
    Unbounded,
    /// Penalty (negative) for a nominally infeasible controller.
    Infeasible(f64),
}

impl InnerValue {
    pub fn objective(self) -> f64 {
        match self {
            InnerValue::Feasible(e) => e,
            InnerValue::Unbounded => f64::INFINITY,
            InnerValue::Infeasible(p) => p,
        }
    }
}

pub(crate) struct Solver<'a> {
    problem: &'a ScenarioProblem,
    cfg: &'a ScenarioSolverConfig,
    coords: ParamCoords,
    input_scale: f64,
}

impl<'a> Solver<'a> {
    pub(crate) fn new(problem: &'a ScenarioProblem, cfg: &'a ScenarioSolverConfig) -> Self {
        let input_scale = cfg
            .input_scale
            .or_else(|| problem.input_box.finite_width().map(|w| 0.5 * w))
            .filter(|s| *s > 0.0 && s.is_finite())
            .unwrap_or(1.0);
        let coords = ParamCoords::new(&problem.template, &problem.x0, input_scale);
        Self {
            problem,
            cfg,
            coords,
            input_scale,
        }
    }

    /// Largest epsilon in the monotone envelope of "every scenario feasible".
    ///
    /// The envelope is the longest all-feasible prefix of a uniform grid over
    /// the doubling bracket; the cell after it is then bisected. For
    /// non-monotone feasibility this under-approximates.
    pub(crate) fn inner(&self, alpha: &[f64], scenarios: &ScenarioSet) -> InnerValue {
        let p = self.problem;
        let mut traj = p.scratch();
        if p.nominal(alpha, &mut traj).is_none() {
            return InnerValue::Infeasible(p.nominal_penalty(alpha, self.input_scale, &mut traj));
        }
        if scenarios.is_empty() {
            return InnerValue::Unbounded;
        }
        let mut feasible = |eps: f64| p.all_feasible(alpha, eps, scenarios, &mut traj);

        let mut hi = self.cfg.eps_hi;
        let mut doublings = 0;
        while feasible(hi) {
            if doublings == self.cfg.max_doublings {
                let envelope_ok =
                    (1..self.cfg.grid_points).all(|j| feasible(hi * j as f64 / self.cfg.grid_points as f64));
                if envelope_ok {
                    return InnerValue::Unbounded;
                }
                break;
            }
            hi *= 2.0;
            doublings += 1;
        }

        let g = self.cfg.grid_points.max(1);
        let step = hi / g as f64;
        let mut last = 0usize;
        for j in 1..=g {
            let at = if j == g { hi } else { step * j as f64 };
            if feasible(at) {
                last = j;
            } else {
                break;
            }
        }
        if last == g {
            // only reachable when the doubling cap was hit
            return InnerValue::Feasible(hi);
        }
        let mut lo = step * last as f64;
        let mut up = if last + 1 == g { hi } else { step * (last + 1) as f64 };
        while up - lo > self.cfg.bisection_tol {
            let mid = 0.5 * (lo + up);
            if mid <= lo || mid >= up {
                break;
            }
            if feasible(mid) {
                lo = mid;
            } else {
                up = mid;
            }
        }
        InnerValue::Feasible(lo)
    }

    fn objective(&self, z: &[f64], scenarios: &ScenarioSet) -> f64 {
        let alpha = self.coords.to_alpha(z);
        self.inner(alpha.as_slice(), scenarios).objective()
    }

    /// Global phase: multi-start search, returns the incumbent and traces.
    pub(crate) fn global(&self, scenarios: &ScenarioSet) -> (ParamVector, Vec<StartTrace>) {
        let d = self.problem.template.param_count();
        let mut starts = vec![("zero".to_string(), vec![0.0; d])];
        if let Some(a) = &self.cfg.initial_alpha {
            starts.push(("initial".to_string(), self.coords.from_alpha(a)));
        }
        starts.extend(random_starts(d, &self.cfg.search));
        let f = |z: &[f64]| -self.objective(z, scenarios);
        let runs = multistart(&f, &starts, &self.cfg.search);
        let candidates: Vec<(f64, ParamVector)> = runs
            .iter()
            .map(|(r, _)| (-r.value, self.coords.to_alpha(&r.x)))
            .collect();
        let best = pick_best(&candidates).expect("at least one start");
        let incumbent = candidates[best].1.clone();
        (incumbent, runs.into_iter().map(|(_, t)| t).collect())
    }

    /// Deterministic local refinement from `warm`; this is the step that is
    /// repeated for leave-one-out complexity.
    pub(crate) fn refine(&self, warm: &ParamVector, scenarios: &ScenarioSet) -> (ParamVector, InnerValue, usize) {
        let z0 = self.coords.from_alpha(warm);
        let local_cfg = SearchConfig {
            max_evals: self.cfg.refine_evals,
            initial_step: self.cfg.refine_step,
            ..self.cfg.search.clone()
        };
        let f = |z: &[f64]| -self.objective(z, scenarios);
        let start_value = f(&z0);
        let res = nelder_mead_restarting(&f, &z0, &local_cfg);
        // keep the warm start unless refinement strictly improves
        let z = if res.value < start_value { res.x } else { z0 };
        let alpha = self.coords.to_alpha(&z);
        let value = self.inner(alpha.as_slice(), scenarios);
        (alpha, value, res.evals + 1)
    }

    pub(crate) fn package(
        &self,
        alpha: ParamVector,
        value: InnerValue,
        scenarios: &ScenarioSet,
        trace: SolverTrace,
    ) -> Result<ScenarioSolution> {
        let (epsilon, status) = match value {
            InnerValue::Feasible(e) => (e, ResilienceStatus::Exact),
            InnerValue::Unbounded => (f64::INFINITY, ResilienceStatus::Unbounded),
            InnerValue::Infeasible(_) => (0.0, ResilienceStatus::NominalInfeasible),
        };
        let eval_eps = if epsilon.is_finite() { epsilon } else { 0.0 };
        let margins = self.problem.margins(&alpha, eval_eps, scenarios)?;
        Ok(ScenarioSolution {
            epsilon,
            alpha,
            status,
            margins,
            trace,
        })
    }
}

/// Maximizes epsilon subject to every scenario being feasible at `(epsilon, alpha)`.
///
/// A global multi-start phase picks an incumbent controller; a warm-started
/// local refinement from it produces the returned solution. Both phases are
/// deterministic given the scenarios and the config.
pub fn solve_scenario_program(
    problem: &ScenarioProblem,
    scenarios: &ScenarioSet,
    cfg: &ScenarioSolverConfig,
) -> Result<ScenarioSolution> {
    problem.check_scenarios(scenarios)?;
    if let Some(a) = &cfg.initial_alpha {
        problem.template.check(a)?;
    }
    let solver = Solver::new(problem, cfg);
    let (warm, starts) = solver.global(scenarios);
    let (alpha, value, refine_evals) = solver.refine(&warm, scenarios);
    solver.package(
        alpha,
        value,
        scenarios,
        SolverTrace {
            starts,
            warm_start: warm,
            refine_evals,
        },
    )
}

/// Runs only the warm-started refinement from `warm`.
pub fn resolve_from(
    problem: &ScenarioProblem,
    scenarios: &ScenarioSet,
    cfg: &ScenarioSolverConfig,
    warm: &ParamVector,
) -> Result<ScenarioSolution> {
    problem.check_scenarios(scenarios)?;
    problem.template.check(warm)?;
    let solver = Solver::new(problem, cfg);
    let (alpha, value, refine_evals) = solver.refine(warm, scenarios);
    solver.package(
        alpha,
        value,
        scenarios,
        SolverTrace {
            starts: Vec::new(),
            warm_start: warm.clone(),
            refine_evals,
        },
    )
}

/// Largest epsilon at which `alpha` keeps every scenario feasible (inner
/// line search only).
pub fn max_feasible_epsilon(
    problem: &ScenarioProblem,
    scenarios: &ScenarioSet,
    cfg: &ScenarioSolverConfig,
    alpha: &ParamVector,
) -> Result<InnerValue> {
    problem.check_scenarios(scenarios)?;
    problem.template.check(alpha)?;
    Ok(Solver::new(problem, cfg).inner(alpha.as_slice(), scenarios))
}
