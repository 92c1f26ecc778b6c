//! Builtin models and experiment recipes: a planar mobile robot with a
//! polytopic reach-avoid specification (exact path) and an adaptive cruise
//! controller with ball targets (scenario path).

use std::collections::BTreeMap;
use std::sync::Arc;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dynamics::{
    rollout, ControllerKind, ControllerTemplate, DisturbanceSeq, DynamicsMap, ParamVector, SystemModel, Trajectory,
};
use crate::error::{Error, Result};
use crate::linear::{synthesize_linear, violating_vertex, ResilienceResult, ResilienceStatus};
use crate::scenario::{
    certify, sample_scenarios, solve_scenario_program, ScenarioCertificate, ScenarioProblem, ScenarioSet,
    ScenarioSolution, ScenarioSolverConfig,
};
use crate::search::SearchConfig;
use crate::specs::{InputBox, Polytope, SpecExpr, StageSpec};

// ---------------------------------------------------------------- robot

pub struct RobotCase {
    pub sys: SystemModel,
    pub x0: Vec<f64>,
    pub horizon: usize,
    pub r1: Polytope,
    pub r2: Polytope,
    pub r3: Polytope,
}

impl RobotCase {
    pub fn new() -> Self {
        let boxp = |lo: [f64; 2], hi: [f64; 2]| Polytope::from_box(&lo, &hi).expect("valid box");
        Self {
            sys: SystemModel::linear(DMatrix::identity(2, 2), DMatrix::identity(2, 2)).expect("2x2"),
            x0: vec![0.0, 0.2],
            horizon: 6,
            r1: boxp([-0.3, 0.6], [0.3, 1.25]),
            r2: boxp([0.8, 1.2], [1.5, 1.75]),
            r3: boxp([-1.0, 0.0], [1.7, 2.0]),
        }
    }

    /// Reach `R1` at step 2, stay in `R2` over steps 4..=6, stay in `R3` throughout.
    pub fn spec(&self) -> SpecExpr {
        SpecExpr::And(vec![
            SpecExpr::next(2, self.r1.clone()),
            SpecExpr::always(4, 6, self.r2.clone()),
            SpecExpr::always(0, 6, self.r3.clone()),
        ])
    }

    pub fn stage_spec(&self) -> StageSpec {
        self.spec().to_stage_spec(self.horizon, None).expect("conjunctive polytope spec")
    }
}

impl Default for RobotCase {
    fn default() -> Self {
        Self::new()
    }
}

/// Search settings for the robot: twice the default number of random starts,
/// which makes the result insensitive to the seed.
pub fn robot_search() -> SearchConfig {
    SearchConfig {
        random_starts: 16,
        ..SearchConfig::default()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RobotConfig {
    pub search: SearchConfig,
    /// Random within-bound rollouts to emit.
    pub count: usize,
    pub seed: u64,
    /// Magnitude of the emitted violating rollout, relative to the returned epsilon.
    pub excess_factor: f64,
}

impl Default for RobotConfig {
    fn default() -> Self {
        Self {
            search: robot_search(),
            count: 100,
            seed: 1,
            excess_factor: 1.2,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RobotRun {
    pub result: ResilienceResult,
    pub nominal: Trajectory,
    /// Rollouts under uniform disturbances of magnitude at most epsilon.
    pub within: Vec<Trajectory>,
    /// A corner disturbance at `excess_factor * epsilon` that breaks the spec.
    pub exceeding: Option<Trajectory>,
}

fn uniform_disturbance(rng: &mut ChaCha8Rng, n: usize, horizon: usize, eps: f64) -> DisturbanceSeq {
    DisturbanceSeq::Raw(
        (0..horizon)
            .map(|_| (0..n).map(|_| rng.gen_range(-eps..=eps)).collect())
            .collect(),
    )
}

pub fn robot_experiment(cfg: &RobotConfig) -> Result<RobotRun> {
    let case = RobotCase::new();
    let stage = case.stage_spec();
    let result = synthesize_linear(&case.sys, &stage, &case.x0, &cfg.search)?;
    let template = ControllerTemplate::linear(2, 2);
    let nominal = rollout(
        &case.sys,
        &template,
        &result.alpha,
        &case.x0,
        &DisturbanceSeq::zero(2, case.horizon),
        case.horizon,
    )?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut within = Vec::with_capacity(cfg.count);
    let mut exceeding = None;
    if result.status == ResilienceStatus::Exact {
        for _ in 0..cfg.count {
            let d = uniform_disturbance(&mut rng, 2, case.horizon, result.epsilon);
            within.push(rollout(&case.sys, &template, &result.alpha, &case.x0, &d, case.horizon)?);
        }
        let big = result.epsilon * cfg.excess_factor;
        if let Some(d) = violating_vertex(&case.sys, &result.alpha, &stage, &case.x0, big)? {
            exceeding = Some(rollout(&case.sys, &template, &result.alpha, &case.x0, &d, case.horizon)?);
        }
    }
    Ok(RobotRun {
        result,
        nominal,
        within,
        exceeding,
    })
}

// ---------------------------------------------------------------- adaptive cruise control

/// Vehicle and scenario constants for the cruise-control model.
///
/// `tau` and `v0` are not part of the published parameter table; the
/// defaults (0.5 s, 15 m/s) are the values under which the published
/// controllers meet the targets. `scale_v` and `scale_f` map the normalized
/// disturbance onto lead-speed and rolling-resistance uncertainty.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AccParams {
    pub mass: f64,
    pub f0: f64,
    pub f1: f64,
    pub f2: f64,
    pub force_min: f64,
    pub force_max: f64,
    pub tau: f64,
    pub v0: f64,
    pub scale_v: f64,
    pub scale_f: f64,
}

impl Default for AccParams {
    fn default() -> Self {
        Self {
            mass: 1370.0,
            f0: 51.0709,
            f1: 0.3494,
            f2: 0.4161,
            force_min: -4031.9,
            force_max: 2687.9,
            tau: 0.5,
            v0: 15.0,
            scale_v: 2.0,
            scale_f: 2732.0,
        }
    }
}

impl AccParams {
    pub fn from_overrides(params: &BTreeMap<String, f64>) -> Result<Self> {
        let mut p = Self::default();
        for (k, v) in params {
            let slot = match k.as_str() {
                "mass" => &mut p.mass,
                "f0" => &mut p.f0,
                "f1" => &mut p.f1,
                "f2" => &mut p.f2,
                "force_min" => &mut p.force_min,
                "force_max" => &mut p.force_max,
                "tau" => &mut p.tau,
                "v0" => &mut p.v0,
                "scale_v" => &mut p.scale_v,
                "scale_f" => &mut p.scale_f,
                other => return Err(Error::Config(format!("unknown acc parameter `{other}`"))),
            };
            *slot = *v;
        }
        if !(p.mass > 0.0 && p.tau > 0.0) {
            return Err(Error::Config("acc mass and tau must be positive".into()));
        }
        Ok(p)
    }

    pub fn as_map(&self) -> BTreeMap<String, f64> {
        [
            ("mass", self.mass),
            ("f0", self.f0),
            ("f1", self.f1),
            ("f2", self.f2),
            ("force_min", self.force_min),
            ("force_max", self.force_max),
            ("tau", self.tau),
            ("v0", self.v0),
            ("scale_v", self.scale_v),
            ("scale_f", self.scale_f),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect()
    }

    /// Force that holds speed `v` constant.
    pub fn equilibrium_force(&self, v: f64) -> f64 {
        self.f0 + self.f1 * v + self.f2 * v * v
    }
}

/// State `(h, v)`: headway and follower speed; input: traction force `F`.
///
/// ```text
/// h' = h + tau (v0 - v)
/// v' = v + tau / m (F - f0 - f1 v - f2 v^2)
/// ```
///
/// A normalized disturbance `eps * delta` enters as lead-speed error
/// `scale_v * eps * delta_1` and resistance error `scale_f * eps * delta_2`.
#[derive(Debug, Clone)]
pub struct AccDynamics {
    params: AccParams,
    gain: [f64; 2],
}

impl AccDynamics {
    pub fn new(params: AccParams) -> Self {
        let gain = [params.tau * params.scale_v, params.tau * params.scale_f / params.mass];
        Self { params, gain }
    }

    pub fn params(&self) -> &AccParams {
        &self.params
    }
}

impl DynamicsMap for AccDynamics {
    fn name(&self) -> &str {
        "acc"
    }

    fn state_dim(&self) -> usize {
        2
    }

    fn input_dim(&self) -> usize {
        1
    }

    fn step(&self, x: &[f64], u: &[f64], out: &mut [f64]) {
        let p = &self.params;
        let (h, v) = (x[0], x[1]);
        out[0] = h + p.tau * (p.v0 - v);
        out[1] = v + p.tau / p.mass * (u[0] - p.f0 - p.f1 * v - p.f2 * v * v);
    }

    fn disturbance_gain(&self) -> Option<&[f64]> {
        Some(&self.gain)
    }

    fn params(&self) -> BTreeMap<String, f64> {
        self.params.as_map()
    }
}

pub struct AccCase {
    pub params: AccParams,
    pub x0: Vec<f64>,
    pub horizon: usize,
    pub b1_center: Vec<f64>,
    pub b2_center: Vec<f64>,
    pub radius: f64,
}

impl AccCase {
    pub fn new(params: AccParams) -> Self {
        Self {
            params,
            x0: vec![60.0, 15.0],
            horizon: 4,
            b1_center: vec![58.75, 16.4],
            b2_center: vec![57.75, 15.6],
            radius: 0.1f64.sqrt(),
        }
    }

    pub fn system(&self) -> SystemModel {
        SystemModel::nonlinear(Arc::new(AccDynamics::new(self.params)))
    }

    /// In `B1` at step 3 and in `B2` at step 4.
    pub fn spec(&self) -> SpecExpr {
        SpecExpr::And(vec![
            SpecExpr::ball(self.b1_center.clone(), self.radius, 3),
            SpecExpr::ball(self.b2_center.clone(), self.radius, 4),
        ])
    }

    pub fn input_box(&self) -> InputBox {
        InputBox::new(vec![self.params.force_min], vec![self.params.force_max]).expect("ordered bounds")
    }

    pub fn problem(&self, kind: ControllerKind) -> Result<ScenarioProblem> {
        let sys = self.system();
        let template = ControllerTemplate::for_system(kind, &sys);
        ScenarioProblem::new(sys, template, self.x0.clone(), self.spec(), self.input_box(), self.horizon)
    }
}

impl Default for AccCase {
    fn default() -> Self {
        Self::new(AccParams::default())
    }
}

#[derive(Debug, Clone)]
pub struct AccRun {
    pub problem: ScenarioProblem,
    pub scenarios: ScenarioSet,
    pub solution: ScenarioSolution,
    /// Empty when certification was not requested.
    pub certificates: Vec<ScenarioCertificate>,
}

/// Samples `m` scenarios with `seed`, solves the scenario program and, when
/// `betas` is non-empty, certifies the solution.
pub fn acc_experiment(
    params: AccParams,
    kind: ControllerKind,
    m: usize,
    seed: u64,
    betas: &[f64],
    cfg: &ScenarioSolverConfig,
) -> Result<AccRun> {
    match kind {
        ControllerKind::Linear | ControllerKind::Polynomial { degree: 2 } => {}
        other => {
            return Err(Error::InvalidArgument(format!(
                "acc experiment supports linear or degree-2 polynomial controllers, got {other:?}"
            )))
        }
    }
    let case = AccCase::new(params);
    let problem = case.problem(kind)?;
    let scenarios = sample_scenarios(2, case.horizon, m, seed);
    let solution = solve_scenario_program(&problem, &scenarios, cfg)?;
    let certificates = if betas.is_empty() {
        Vec::new()
    } else {
        certify(&problem, &solution, &scenarios, betas, cfg)?
    };
    Ok(AccRun {
        problem,
        scenarios,
        solution,
        certificates,
    })
}

/// Default solver settings for the cruise-control runs.
pub fn acc_solver_config(seed: u64) -> ScenarioSolverConfig {
    ScenarioSolverConfig {
        search: SearchConfig {
            seed,
            ..SearchConfig::default()
        },
        ..ScenarioSolverConfig::default()
    }
}

/// Parameters of the published M = 100 linear controller, for reference runs.
pub fn acc_reference_alpha() -> ParamVector {
    ParamVector(vec![3377.689, -599.61, -190979.28])
}
