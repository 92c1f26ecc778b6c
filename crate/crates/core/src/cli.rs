//! Command-line front end.
//!
//! Exit codes: 0 success (including an unbounded resilience), 1 usage or
//! input error, 2 nominal trajectory infeasible, 3 disjunctive specification
//! given to `exact`, 4 scenario solver not deterministic.

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::casestudies::{robot_experiment, RobotConfig};
use crate::config::{ControllerConfig, Problem, ProblemConfig};
use crate::dynamics::{rollout, ControllerKind, Dynamics, DisturbanceSeq, ParamVector, Trajectory};
use crate::error::{Error, Result};
use crate::linear::{evaluate_linear, synthesize_linear, ResilienceStatus};
use crate::report::{beta_key, split_alpha, write_trajectories_file, Method, ResultTable, RunReport, Timings};
use crate::scenario::{certify, risk_bound, sample_scenarios, solve_scenario_program, ScenarioSet};
use crate::specs::check_traj;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_INFEASIBLE: i32 = 2;
pub const EXIT_NOT_PRODUCT: i32 = 3;
pub const EXIT_NONDETERMINISTIC: i32 = 4;

/// Caps the worker pool; defaults to the machine's parallelism.
pub const THREADS_ENV: &str = "RESILO_THREADS";

#[derive(Debug, Parser)]
#[command(name = "resilo", version, about = "Resilience of controlled systems against bounded disturbances")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Exact resilience for a linear system, linear controller and polytopic spec.
    Exact {
        config: PathBuf,
        #[arg(short, long, default_value = ".")]
        out: PathBuf,
    },
    /// Scenario approximation with a violation-probability certificate.
    Scenario {
        config: PathBuf,
        #[arg(short, long, default_value = ".")]
        out: PathBuf,
    },
    /// Violation-probability bound for complexity K out of M scenarios.
    Bound { k: usize, m: usize, beta: f64 },
    /// Roll out random disturbances at a fixed magnitude and check the spec.
    Simulate {
        config: PathBuf,
        /// JSON array of parameters, or any JSON object with an "alpha" field (e.g. a report).
        alpha: PathBuf,
        #[arg(long)]
        eps: f64,
        #[arg(long, default_value_t = 100)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Sample corners of the disturbance box instead of its interior.
        #[arg(long)]
        vertex: bool,
        #[arg(short, long, default_value = ".")]
        out: PathBuf,
    },
    /// Run a builtin case study.
    Casestudy {
        #[command(subcommand)]
        which: CaseStudy,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ControllerChoice {
    Linear,
    /// Degree-2 polynomial.
    Poly,
}

#[derive(Debug, Subcommand)]
pub enum CaseStudy {
    /// Planar robot, exact path.
    Robot {
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(short, long, default_value = ".")]
        out: PathBuf,
    },
    /// Adaptive cruise control, scenario path.
    Acc {
        #[arg(long, value_enum, default_value_t = ControllerChoice::Linear)]
        controller: ControllerChoice,
        #[arg(short = 'm', long, default_value_t = 100)]
        scenarios: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(short, long, default_value = ".")]
        out: PathBuf,
    },
}

/// Builds the global rayon pool from `RESILO_THREADS` if set. Later calls are no-ops.
pub fn configure_threads() -> Result<()> {
    let Ok(v) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .map_err(|_| Error::Config(format!("{THREADS_ENV} must be a positive integer, got `{v}`")))?;
    if n == 0 {
        return Err(Error::Config(format!("{THREADS_ENV} must be at least 1")));
    }
    // fails only if the pool already exists
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::NotProductForm => EXIT_NOT_PRODUCT,
        Error::DeterminismViolation => EXIT_NONDETERMINISTIC,
        _ => EXIT_USAGE,
    }
}

fn status_code(status: ResilienceStatus) -> i32 {
    match status {
        ResilienceStatus::NominalInfeasible => EXIT_INFEASIBLE,
        _ => EXIT_OK,
    }
}

pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let outcome = configure_threads().and_then(|_| dispatch(cli.command));
    match outcome {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            if matches!(e, Error::NotProductForm) {
                eprintln!("the exact path needs a conjunction of polytopic constraints; run `resilo scenario` on this config instead");
            }
            exit_code(&e)
        }
    }
}

fn dispatch(cmd: Command) -> Result<i32> {
    match cmd {
        Command::Exact { config, out } => cmd_exact(&config, &out),
        Command::Scenario { config, out } => cmd_scenario(&config, &out),
        Command::Bound { k, m, beta } => Ok(cmd_bound(k, m, beta)),
        Command::Simulate {
            config,
            alpha,
            eps,
            count,
            seed,
            vertex,
            out,
        } => cmd_simulate(&config, &alpha, eps, count, seed, vertex, &out),
        Command::Casestudy { which } => match which {
            CaseStudy::Robot { seed, out } => casestudy_robot(seed, &out),
            CaseStudy::Acc {
                controller,
                scenarios,
                seed,
                out,
            } => {
                let c = match controller {
                    ControllerChoice::Linear => ControllerConfig::linear(),
                    ControllerChoice::Poly => ControllerConfig::polynomial(2),
                };
                let cfg = ProblemConfig::acc(c, scenarios, seed);
                let (report, problem, scenarios) = scenario_report(&cfg)?;
                finish_scenario(&report, &problem, &scenarios, &out)
            }
        },
    }
}

fn nominal(problem: &Problem, alpha: &ParamVector) -> Result<Trajectory> {
    rollout(
        &problem.sys,
        &problem.template,
        alpha,
        &problem.x0,
        &DisturbanceSeq::zero(problem.sys.state_dim(), problem.horizon),
        problem.horizon,
    )
}

fn write_runs(out: &Path, problem: &Problem, runs: &[(usize, &Trajectory)]) -> Result<()> {
    write_trajectories_file(
        &out.join("trajectories.csv"),
        problem.sys.state_dim(),
        problem.sys.input_dim(),
        runs,
    )
}

fn describe(eps: f64, status: ResilienceStatus) -> String {
    match status {
        ResilienceStatus::Unbounded => "epsilon = inf (unbounded)".into(),
        ResilienceStatus::NominalInfeasible => "epsilon = 0 (nominal trajectory infeasible)".into(),
        ResilienceStatus::Exact => format!("epsilon = {eps:.6}"),
    }
}

/// Solves `cfg` on the exact path.
pub fn exact_report(cfg: &ProblemConfig) -> Result<(RunReport, Problem)> {
    let start = Instant::now();
    let problem = cfg.build()?;
    if problem.spec.has_or() {
        return Err(Error::NotProductForm);
    }
    if !matches!(problem.sys.dynamics(), Dynamics::Linear { .. }) {
        return Err(Error::InvalidArgument(
            "the exact path needs a linear system; use `resilo scenario`".into(),
        ));
    }
    if problem.template.kind() != ControllerKind::Linear {
        return Err(Error::InvalidArgument(
            "the exact path needs a linear controller; use `resilo scenario`".into(),
        ));
    }
    if !problem.input_box.is_unbounded() {
        return Err(Error::InputConstraintsUnsupported);
    }
    let stage = problem.stage_spec()?;
    let result = match &problem.fixed_alpha {
        Some(a) => evaluate_linear(&problem.sys, &stage, &problem.x0, a)?,
        None => synthesize_linear(&problem.sys, &stage, &problem.x0, &cfg.solver.search_config())?,
    };
    let solve_s = start.elapsed().as_secs_f64();
    let report = RunReport {
        tool: RunReport::tool_name(),
        config_hash: cfg.hash()?,
        config: cfg.clone(),
        method: Method::Exact,
        seed: cfg.solver.seed,
        epsilon: result.epsilon,
        status: result.status,
        alpha: result.alpha.clone(),
        exact: Some(result),
        scenario: None,
        certificates: Vec::new(),
        table: None,
        timings: Timings {
            solve_s,
            certify_s: 0.0,
            total_s: start.elapsed().as_secs_f64(),
        },
    };
    Ok((report, problem))
}

pub fn cmd_exact(config: &Path, out: &Path) -> Result<i32> {
    let cfg = ProblemConfig::load(config)?;
    let (report, problem) = exact_report(&cfg)?;
    std::fs::create_dir_all(out)?;
    report.write(&out.join("report.json"))?;
    let nom = nominal(&problem, &report.alpha)?;
    write_runs(out, &problem, &[(0, &nom)])?;
    println!("{}", describe(report.epsilon, report.status));
    Ok(status_code(report.status))
}

/// Samples, solves and certifies `cfg` on the scenario path. A fixed
/// controller in the config seeds the search as an extra start.
pub fn scenario_report(cfg: &ProblemConfig) -> Result<(RunReport, Problem, ScenarioSet)> {
    let start = Instant::now();
    let problem = cfg.build()?;
    let sp = problem.scenario_problem()?;
    let solver_cfg = cfg.solver.scenario_config(problem.fixed_alpha.clone());
    let scenarios = sample_scenarios(problem.sys.state_dim(), problem.horizon, cfg.solver.scenarios, cfg.solver.seed);
    let sol = solve_scenario_program(&sp, &scenarios, &solver_cfg)?;
    let solve_s = start.elapsed().as_secs_f64();
    let cert_start = Instant::now();
    let certificates = if sol.status == ResilienceStatus::NominalInfeasible || cfg.solver.betas.is_empty() {
        Vec::new()
    } else {
        certify(&sp, &sol, &scenarios, &cfg.solver.betas, &solver_cfg)?
    };
    let certify_s = cert_start.elapsed().as_secs_f64();
    let table = certificates.first().map(|c| {
        let (alpha_1, alpha_2) = split_alpha(
            &sol.alpha,
            problem.sys.state_dim(),
            problem.sys.input_dim(),
            matches!(problem.template.kind(), ControllerKind::Polynomial { .. }),
        );
        ResultTable {
            scenarios: scenarios.len(),
            epsilon: sol.epsilon,
            alpha_1,
            alpha_2,
            complexity: c.complexity,
            bound: certificates.iter().map(|c| (beta_key(c.beta), c.bound)).collect(),
        }
    });
    let report = RunReport {
        tool: RunReport::tool_name(),
        config_hash: cfg.hash()?,
        config: cfg.clone(),
        method: Method::Scenario,
        seed: cfg.solver.seed,
        epsilon: sol.epsilon,
        status: sol.status,
        alpha: sol.alpha.clone(),
        exact: None,
        scenario: Some(sol),
        certificates,
        table,
        timings: Timings {
            solve_s,
            certify_s,
            total_s: start.elapsed().as_secs_f64(),
        },
    };
    Ok((report, problem, scenarios))
}

fn finish_scenario(report: &RunReport, problem: &Problem, scenarios: &ScenarioSet, out: &Path) -> Result<i32> {
    std::fs::create_dir_all(out)?;
    report.write(&out.join("report.json"))?;
    let mut runs = vec![nominal(problem, &report.alpha)?];
    if report.epsilon.is_finite() && report.status == ResilienceStatus::Exact {
        for d in &scenarios.deltas {
            let dist = DisturbanceSeq::normalized(d.clone(), report.epsilon)?;
            runs.push(rollout(&problem.sys, &problem.template, &report.alpha, &problem.x0, &dist, problem.horizon)?);
        }
    }
    let indexed: Vec<(usize, &Trajectory)> = runs.iter().enumerate().collect();
    write_runs(out, problem, &indexed)?;
    println!("{}", describe(report.epsilon, report.status));
    for c in &report.certificates {
        println!("{}", c.statement());
    }
    Ok(status_code(report.status))
}

pub fn cmd_scenario(config: &Path, out: &Path) -> Result<i32> {
    let cfg = ProblemConfig::load(config)?;
    let (report, problem, scenarios) = scenario_report(&cfg)?;
    finish_scenario(&report, &problem, &scenarios, out)
}

pub fn cmd_bound(k: usize, m: usize, beta: f64) -> i32 {
    if k > m {
        eprintln!("error: complexity k = {k} exceeds the number of scenarios M = {m}");
        eprintln!("usage: resilo bound <K> <M> <BETA>   with 0 <= K <= M and 0 < BETA <= 1");
        return EXIT_USAGE;
    }
    match risk_bound(k, m, beta) {
        Ok(b) => {
            println!("{b:.6}");
            EXIT_OK
        }
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_USAGE
        }
    }
}

/// Outcome of a `simulate` run, also written as `summary.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationSummary {
    pub eps: f64,
    pub seed: u64,
    pub vertex: bool,
    pub nominal_pass: bool,
    pub runs: usize,
    pub passed: usize,
    pub failed: usize,
}

/// Reads parameters from a bare JSON array or any object with an `alpha` field.
pub fn read_alpha(path: &Path) -> Result<ParamVector> {
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(path)?)?;
    let field = match &v {
        serde_json::Value::Object(o) => o
            .get("alpha")
            .ok_or_else(|| Error::Config(format!("{} has no `alpha` field", path.display())))?,
        other => other,
    };
    Ok(serde_json::from_value(field.clone())?)
}

/// Rollouts of `alpha` under `count` random disturbance sequences of
/// magnitude `eps`; run 0 is the nominal. With `eps == 0` only the nominal
/// run is produced.
pub fn simulate(
    problem: &Problem,
    alpha: &ParamVector,
    eps: f64,
    count: usize,
    seed: u64,
    vertex: bool,
) -> Result<(Vec<Trajectory>, SimulationSummary)> {
    if !(eps.is_finite() && eps >= 0.0) {
        return Err(Error::InvalidArgument(format!("eps must be finite and >= 0, got {eps}")));
    }
    problem.template.check(alpha)?;
    let n = problem.sys.state_dim();
    let passes = |t: &Trajectory| {
        check_traj(&problem.spec, t) && t.inputs.iter().all(|u| problem.input_box.margin(u) >= 0.0)
    };
    let mut runs = vec![nominal(problem, alpha)?];
    let nominal_pass = passes(&runs[0]);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let disturbed = if eps == 0.0 { 0 } else { count };
    let mut passed = 0;
    for _ in 0..disturbed {
        let deltas: Vec<Vec<f64>> = (0..problem.horizon)
            .map(|_| {
                (0..n)
                    .map(|_| {
                        if vertex {
                            if rng.gen::<bool>() {
                                1.0
                            } else {
                                -1.0
                            }
                        } else {
                            rng.gen_range(-1.0..=1.0)
                        }
                    })
                    .collect()
            })
            .collect();
        let dist = DisturbanceSeq::normalized(deltas, eps)?;
        let t = rollout(&problem.sys, &problem.template, alpha, &problem.x0, &dist, problem.horizon)?;
        if passes(&t) {
            passed += 1;
        }
        runs.push(t);
    }
    let summary = SimulationSummary {
        eps,
        seed,
        vertex,
        nominal_pass,
        runs: disturbed,
        passed,
        failed: disturbed - passed,
    };
    Ok((runs, summary))
}

pub fn cmd_simulate(
    config: &Path,
    alpha_path: &Path,
    eps: f64,
    count: usize,
    seed: u64,
    vertex: bool,
    out: &Path,
) -> Result<i32> {
    let problem = ProblemConfig::load(config)?.build()?;
    let alpha = read_alpha(alpha_path)?;
    let (runs, summary) = simulate(&problem, &alpha, eps, count, seed, vertex)?;
    std::fs::create_dir_all(out)?;
    let indexed: Vec<(usize, &Trajectory)> = runs.iter().enumerate().collect();
    write_runs(out, &problem, &indexed)?;
    std::fs::write(out.join("summary.json"), serde_json::to_string_pretty(&summary)? + "\n")?;
    println!("nominal: {}", if summary.nominal_pass { "pass" } else { "fail" });
    println!("pass: {}/{}  fail: {}/{}", summary.passed, summary.runs, summary.failed, summary.runs);
    Ok(EXIT_OK)
}

fn casestudy_robot(seed: u64, out: &Path) -> Result<i32> {
    let start = Instant::now();
    let cfg = ProblemConfig::robot();
    let problem = cfg.build()?;
    let run = robot_experiment(&RobotConfig {
        search: cfg.solver.search_config(),
        seed,
        ..RobotConfig::default()
    })?;
    let report = RunReport {
        tool: RunReport::tool_name(),
        config_hash: cfg.hash()?,
        config: cfg.clone(),
        method: Method::Exact,
        seed: cfg.solver.seed,
        epsilon: run.result.epsilon,
        status: run.result.status,
        alpha: run.result.alpha.clone(),
        exact: Some(run.result.clone()),
        scenario: None,
        certificates: Vec::new(),
        table: None,
        timings: Timings {
            solve_s: start.elapsed().as_secs_f64(),
            certify_s: 0.0,
            total_s: start.elapsed().as_secs_f64(),
        },
    };
    std::fs::create_dir_all(out)?;
    report.write(&out.join("report.json"))?;
    let mut runs: Vec<(usize, &Trajectory)> = vec![(0, &run.nominal)];
    runs.extend(run.within.iter().enumerate().map(|(i, t)| (i + 1, t)));
    if let Some(t) = &run.exceeding {
        runs.push((run.within.len() + 1, t));
    }
    write_runs(out, &problem, &runs)?;
    let spec = problem.spec.clone();
    let ok = run.within.iter().filter(|t| check_traj(&spec, t)).count();
    println!("{}", describe(report.epsilon, report.status));
    println!("alpha = {:?}", report.alpha.0);
    println!("within-bound rollouts satisfying the spec: {ok}/{}", run.within.len());
    if let Some(t) = &run.exceeding {
        println!(
            "corner rollout at 1.2 epsilon satisfies the spec: {}",
            check_traj(&spec, t)
        );
    }
    Ok(status_code(report.status))
}

pub fn main() -> ! {
    std::process::exit(run(std::env::args_os()))
}
