//! Declarative problem description read from JSON.
//!
//! ```json
//! {
//!   "system": {"linear": {"a": [[1, 0], [0, 1]], "b": [[1, 0], [0, 1]]}},
//!   "controller": {"kind": "linear"},
//!   "spec": {"and": [
//!     {"next": {"steps": 2, "region": {"box": {"lower": [-0.3, 0.6], "upper": [0.3, 1.25]}}}},
//!     {"always": {"from": 0, "to": 6, "region": {"box": {"lower": [-1, 0], "upper": [1.7, 2]}}}}
//!   ]},
//!   "x0": [0, 0.2],
//!   "horizon": 6
//! }
//! ```
//!
//! Unknown fields are rejected everywhere. Bounds may use `"inf"` / `"-inf"`.

use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::casestudies::{robot_search, AccCase, AccParams, RobotCase};
use crate::dynamics::{ControllerKind, ControllerTemplate, DynamicsRegistry, ParamVector, SystemModel};
use crate::error::{Error, Result};
use crate::report::vec_f64_or_inf;
use crate::scenario::{ScenarioProblem, ScenarioSolverConfig};
use crate::search::SearchConfig;
use crate::specs::{InputBox, Polytope, Region, SpecExpr, StageSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", deny_unknown_fields)]
pub enum SystemConfig {
    Linear { a: Vec<Vec<f64>>, b: Vec<Vec<f64>> },
    Builtin {
        id: String,
        #[serde(default)]
        params: BTreeMap<String, f64>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ControllerFamily {
    Linear,
    Polynomial,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControllerConfig {
    pub kind: ControllerFamily,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub degree: Option<usize>,
    /// Fixed parameters: evaluate this controller instead of synthesizing one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<ParamVector>,
}

impl ControllerConfig {
    pub fn linear() -> Self {
        Self {
            kind: ControllerFamily::Linear,
            degree: None,
            alpha: None,
        }
    }

    pub fn polynomial(degree: usize) -> Self {
        Self {
            kind: ControllerFamily::Polynomial,
            degree: Some(degree),
            alpha: None,
        }
    }

    pub fn controller_kind(&self) -> Result<ControllerKind> {
        match (self.kind, self.degree) {
            (ControllerFamily::Linear, None | Some(1)) => Ok(ControllerKind::Linear),
            (ControllerFamily::Linear, Some(d)) => {
                Err(Error::Config(format!("linear controller cannot have degree {d}")))
            }
            (ControllerFamily::Polynomial, Some(d)) if d >= 1 => Ok(ControllerKind::Polynomial { degree: d }),
            (ControllerFamily::Polynomial, _) => Err(Error::Config("polynomial controller needs degree >= 1".into())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", deny_unknown_fields)]
pub enum RegionConfig {
    Box {
        #[serde(with = "vec_f64_or_inf")]
        lower: Vec<f64>,
        #[serde(with = "vec_f64_or_inf")]
        upper: Vec<f64>,
    },
    Polytope { g: Vec<Vec<f64>>, h: Vec<f64> },
    Ball { center: Vec<f64>, radius: f64 },
}

impl RegionConfig {
    pub fn from_box(lower: &[f64], upper: &[f64]) -> Self {
        RegionConfig::Box {
            lower: lower.to_vec(),
            upper: upper.to_vec(),
        }
    }

    pub fn to_region(&self) -> Result<Region> {
        match self {
            RegionConfig::Box { lower, upper } => Ok(Polytope::from_box(lower, upper)?.into()),
            RegionConfig::Polytope { g, h } => {
                let n = g.first().map_or(0, Vec::len);
                Ok(Polytope::new(matrix(g, g.len(), n, "polytope g")?, h.clone())?.into())
            }
            RegionConfig::Ball { center, radius } => {
                if !(radius.is_finite() && *radius >= 0.0) {
                    return Err(Error::Config(format!("ball radius must be finite and >= 0, got {radius}")));
                }
                Ok(Region::Ball {
                    center: center.clone(),
                    radius: *radius,
                })
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", deny_unknown_fields)]
pub enum SpecConfig {
    At { time: usize, region: RegionConfig },
    Next { steps: usize, region: RegionConfig },
    Always { from: usize, to: usize, region: RegionConfig },
    Eventually { from: usize, to: usize, region: RegionConfig },
    And(Vec<SpecConfig>),
    Or(Vec<SpecConfig>),
}

impl SpecConfig {
    pub fn to_expr(&self) -> Result<SpecExpr> {
        Ok(match self {
            SpecConfig::At { time, region } => SpecExpr::At {
                region: region.to_region()?,
                time: *time,
            },
            SpecConfig::Next { steps, region } => SpecExpr::Next {
                steps: *steps,
                region: region.to_region()?,
            },
            SpecConfig::Always { from, to, region } => SpecExpr::Always {
                from: *from,
                to: *to,
                region: region.to_region()?,
            },
            SpecConfig::Eventually { from, to, region } => SpecExpr::Eventually {
                from: *from,
                to: *to,
                region: region.to_region()?,
            },
            SpecConfig::And(v) => SpecExpr::And(v.iter().map(Self::to_expr).collect::<Result<_>>()?),
            SpecConfig::Or(v) => SpecExpr::Or(v.iter().map(Self::to_expr).collect::<Result<_>>()?),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputBoxConfig {
    #[serde(with = "vec_f64_or_inf")]
    pub lower: Vec<f64>,
    #[serde(with = "vec_f64_or_inf")]
    pub upper: Vec<f64>,
}

/// Search knobs shared by both paths. The seed lives in [`SolverBlock`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SearchOptions {
    pub random_starts: usize,
    pub max_evals: usize,
    pub simplex_tol: f64,
    pub initial_step: f64,
    pub random_scale: f64,
    pub restarts: usize,
}

impl Default for SearchOptions {
    fn default() -> Self {
        let d = SearchConfig::default();
        Self {
            random_starts: d.random_starts,
            max_evals: d.max_evals,
            simplex_tol: d.simplex_tol,
            initial_step: d.initial_step,
            random_scale: d.random_scale,
            restarts: d.restarts,
        }
    }
}

/// Scenario-path knobs; see [`ScenarioSolverConfig`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioOptions {
    pub refine_step: f64,
    pub refine_evals: usize,
    pub grid_points: usize,
    pub eps_hi: f64,
    pub max_doublings: u32,
    pub bisection_tol: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub input_scale: Option<f64>,
}

impl Default for ScenarioOptions {
    fn default() -> Self {
        let d = ScenarioSolverConfig::default();
        Self {
            refine_step: d.refine_step,
            refine_evals: d.refine_evals,
            grid_points: d.grid_points,
            eps_hi: d.eps_hi,
            max_doublings: d.max_doublings,
            bisection_tol: d.bisection_tol,
            input_scale: d.input_scale,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverBlock {
    /// Seeds both the random search starts and scenario sampling.
    pub seed: u64,
    /// Number of sampled scenarios `M`.
    pub scenarios: usize,
    pub betas: Vec<f64>,
    pub search: SearchOptions,
    pub scenario: ScenarioOptions,
}

impl Default for SolverBlock {
    fn default() -> Self {
        Self {
            seed: 0,
            scenarios: 100,
            betas: vec![1e-2, 1e-4, 1e-6],
            search: SearchOptions::default(),
            scenario: ScenarioOptions::default(),
        }
    }
}

impl SolverBlock {
    pub fn search_config(&self) -> SearchConfig {
        let s = &self.search;
        SearchConfig {
            random_starts: s.random_starts,
            seed: self.seed,
            max_evals: s.max_evals,
            simplex_tol: s.simplex_tol,
            initial_step: s.initial_step,
            random_scale: s.random_scale,
            restarts: s.restarts,
        }
    }

    pub fn scenario_config(&self, initial_alpha: Option<ParamVector>) -> ScenarioSolverConfig {
        let s = &self.scenario;
        ScenarioSolverConfig {
            search: self.search_config(),
            refine_step: s.refine_step,
            refine_evals: s.refine_evals,
            grid_points: s.grid_points,
            eps_hi: s.eps_hi,
            max_doublings: s.max_doublings,
            bisection_tol: s.bisection_tol,
            input_scale: s.input_scale,
            initial_alpha,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    pub system: SystemConfig,
    pub controller: ControllerConfig,
    pub spec: SpecConfig,
    pub x0: Vec<f64>,
    pub horizon: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input_box: Option<InputBoxConfig>,
    #[serde(default)]
    pub solver: SolverBlock,
}

fn matrix(rows: &[Vec<f64>], r: usize, c: usize, what: &str) -> Result<DMatrix<f64>> {
    if rows.len() != r || rows.iter().any(|row| row.len() != c) {
        return Err(Error::Config(format!("{what} must be {r}x{c}")));
    }
    Ok(DMatrix::from_fn(r, c, |i, j| rows[i][j]))
}

/// Everything a config describes, in library types.
#[derive(Debug, Clone)]
pub struct Problem {
    pub sys: SystemModel,
    pub template: ControllerTemplate,
    pub spec: SpecExpr,
    pub x0: Vec<f64>,
    pub horizon: usize,
    pub input_box: InputBox,
    pub fixed_alpha: Option<ParamVector>,
}

impl Problem {
    pub fn scenario_problem(&self) -> Result<ScenarioProblem> {
        ScenarioProblem::new(
            self.sys.clone(),
            self.template.clone(),
            self.x0.clone(),
            self.spec.clone(),
            self.input_box.clone(),
            self.horizon,
        )
    }

    /// Product-form specification for the exact path.
    pub fn stage_spec(&self) -> Result<StageSpec> {
        self.spec.to_stage_spec(self.horizon, None)
    }
}

impl ProblemConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// Compact serialization; the bytes that [`hash`](Self::hash) covers.
    pub fn canonical_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn hash(&self) -> Result<String> {
        let digest = Sha256::digest(self.canonical_json()?.as_bytes());
        Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
    }

    pub fn build(&self) -> Result<Problem> {
        self.build_with(&DynamicsRegistry::with_builtins())
    }

    /// Resolves builtin system ids through `registry` and checks every
    /// dimension against the system.
    pub fn build_with(&self, registry: &DynamicsRegistry) -> Result<Problem> {
        let sys = match &self.system {
            SystemConfig::Linear { a, b } => {
                let n = a.len();
                let m = b.first().map_or(0, Vec::len);
                SystemModel::linear(matrix(a, n, n, "system a")?, matrix(b, n, m, "system b")?)?
            }
            SystemConfig::Builtin { id, params } => SystemModel::nonlinear(registry.build(id, params)?),
        };
        let (n, m) = (sys.state_dim(), sys.input_dim());
        let template = ControllerTemplate::for_system(self.controller.controller_kind()?, &sys);
        if let Some(a) = &self.controller.alpha {
            template.check(a)?;
        }
        if self.x0.len() != n {
            return Err(Error::Config(format!("x0 has length {}, system state has {n}", self.x0.len())));
        }
        let spec = self.spec.to_expr()?;
        spec.validate(self.horizon, n)?;
        let input_box = match &self.input_box {
            Some(b) => {
                if b.lower.len() != m || b.upper.len() != m {
                    return Err(Error::Config(format!("input box must have {m} entries per side")));
                }
                InputBox::new(b.lower.clone(), b.upper.clone())?
            }
            None => InputBox::unbounded(m),
        };
        let s = &self.solver;
        if s.scenarios == 0 {
            return Err(Error::Config("solver.scenarios must be at least 1".into()));
        }
        if let Some(b) = s.betas.iter().find(|b| !(**b > 0.0 && **b <= 1.0)) {
            return Err(Error::Config(format!("beta must lie in (0, 1], got {b}")));
        }
        Ok(Problem {
            sys,
            template,
            spec,
            x0: self.x0.clone(),
            horizon: self.horizon,
            input_box,
            fixed_alpha: self.controller.alpha.clone(),
        })
    }

    /// The mobile-robot reach-avoid problem.
    pub fn robot() -> Self {
        let c = RobotCase::new();
        let boxed = |p: &Polytope| {
            let (lo, hi) = polytope_box(p);
            RegionConfig::from_box(&lo, &hi)
        };
        Self {
            system: SystemConfig::Linear {
                a: vec![vec![1.0, 0.0], vec![0.0, 1.0]],
                b: vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            },
            controller: ControllerConfig::linear(),
            spec: SpecConfig::And(vec![
                SpecConfig::Next {
                    steps: 2,
                    region: boxed(&c.r1),
                },
                SpecConfig::Always {
                    from: 4,
                    to: 6,
                    region: boxed(&c.r2),
                },
                SpecConfig::Always {
                    from: 0,
                    to: 6,
                    region: boxed(&c.r3),
                },
            ]),
            x0: c.x0,
            horizon: c.horizon,
            input_box: None,
            solver: SolverBlock {
                search: SearchOptions {
                    random_starts: robot_search().random_starts,
                    ..SearchOptions::default()
                },
                ..SolverBlock::default()
            },
        }
    }

    /// The cruise-control problem with `m` scenarios.
    pub fn acc(controller: ControllerConfig, scenarios: usize, seed: u64) -> Self {
        let case = AccCase::new(AccParams::default());
        Self {
            system: SystemConfig::Builtin {
                id: "acc".into(),
                params: BTreeMap::new(),
            },
            controller,
            spec: SpecConfig::And(vec![
                SpecConfig::At {
                    time: 3,
                    region: RegionConfig::Ball {
                        center: case.b1_center.clone(),
                        radius: case.radius,
                    },
                },
                SpecConfig::At {
                    time: 4,
                    region: RegionConfig::Ball {
                        center: case.b2_center.clone(),
                        radius: case.radius,
                    },
                },
            ]),
            x0: case.x0.clone(),
            horizon: case.horizon,
            input_box: Some(InputBoxConfig {
                lower: vec![case.params.force_min],
                upper: vec![case.params.force_max],
            }),
            solver: SolverBlock {
                seed,
                scenarios,
                ..SolverBlock::default()
            },
        }
    }
}

/// Recovers `[lower, upper]` from a polytope built by `Polytope::from_box`.
fn polytope_box(p: &Polytope) -> (Vec<f64>, Vec<f64>) {
    let n = p.dim();
    let mut lo = vec![f64::NEG_INFINITY; n];
    let mut hi = vec![f64::INFINITY; n];
    for r in 0..p.rows() {
        for j in 0..n {
            let g = p.g()[(r, j)];
            if g > 0.0 {
                hi[j] = p.h()[r] / g;
            } else if g < 0.0 {
                lo[j] = p.h()[r] / g;
            }
        }
    }
    (lo, hi)
}
