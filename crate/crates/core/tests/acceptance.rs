//! Acceptance gate: one PASS/FAIL line per criterion, nonzero exit on any failure.

mod support;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use resilo::casestudies::{acc_experiment, acc_solver_config, robot_experiment, AccParams, AccRun, RobotCase, RobotConfig};
use resilo::linear::{build_farkas, OracleConfig};
use resilo::report::RunReport;
use resilo::scenario::{empirical_violation, resolve_from};
use resilo::{
    check_traj, fixed_controller_resilience, risk_bound, rollout, vertex_oracle_resilience, ControllerKind,
    ControllerTemplate, DisturbanceSeq, ParamVector, Polytope, ProblemConfig, ResilienceStatus, StageSpec,
    SystemModel,
};

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within_time(start: Instant, limit: Duration) -> Result<f64, String> {
    let t = start.elapsed();
    ensure(t < limit, || format!("took {:.1} s, limit {} s", t.as_secs_f64(), limit.as_secs()))?;
    Ok(t.as_secs_f64())
}

// ---------------------------------------------------------------- 1

fn risk_table() -> Outcome {
    let start = Instant::now();
    let expected = [
        (4, 10, [0.851, 0.936, 0.971]),
        (8, 100, [0.202, 0.259, 0.307]),
        (9, 500, [0.046, 0.059, 0.072]),
    ];
    let mut worst = 0.0f64;
    for (k, m, row) in expected {
        for (beta, want) in [1e-2, 1e-4, 1e-6].into_iter().zip(row) {
            let got = risk_bound(k, m, beta).map_err(|e| e.to_string())?;
            worst = worst.max((got - want).abs());
            ensure((got - want).abs() <= 5e-3, || format!("b({k}, {m}, {beta}) = {got:.6}, expected {want}"))?;
        }
    }
    let t = within_time(start, Duration::from_secs(1))?;
    Ok(format!("9/9 entries, max deviation {worst:.4}, {t:.3} s"))
}

// ---------------------------------------------------------------- 2

fn robot() -> Outcome {
    let start = Instant::now();
    let run = robot_experiment(&RobotConfig::default()).map_err(|e| e.to_string())?;
    let eps = run.result.epsilon;
    ensure(run.result.status == ResilienceStatus::Exact, || format!("status {:?}", run.result.status))?;
    ensure(eps >= 0.0676, || format!("epsilon {eps:.6} < 0.0676"))?;
    let spec = RobotCase::new().spec();
    let ok = run.within.iter().filter(|t| check_traj(&spec, t)).count();
    ensure(run.within.len() == 100 && ok == 100, || format!("{ok}/{} within-bound rollouts satisfy the spec", run.within.len()))?;
    let broken = run.exceeding.as_ref().is_some_and(|t| !check_traj(&spec, t));
    ensure(broken, || "no violating corner rollout at 1.2 epsilon".into())?;
    let t = within_time(start, Duration::from_secs(60))?;
    Ok(format!("epsilon = {eps:.6}, 100/100 rollouts satisfy, 1.2x corner violates, {t:.1} s"))
}

// ---------------------------------------------------------------- 3

struct Instance {
    sys: SystemModel,
    spec: StageSpec,
    x0: Vec<f64>,
    gain: DMatrix<f64>,
    offset: Vec<f64>,
}

/// Random linear system and controller; each stage keeps the nominal state
/// strictly inside a box plus a few random half-spaces.
fn random_instance(rng: &mut ChaCha8Rng) -> Instance {
    let n = rng.gen_range(1..=3usize);
    let m = rng.gen_range(1..=2usize);
    let horizon = rng.gen_range(1..=4usize.min(12 / n));
    let mut mat = |r: usize, c: usize, s: f64| DMatrix::from_fn(r, c, |_, _| rng.gen_range(-s..s));
    let a = mat(n, n, 1.2);
    let b = mat(n, m, 1.0);
    let gain = mat(m, n, 0.5);
    let offset: Vec<f64> = (0..m).map(|_| rng.gen_range(-0.5..0.5)).collect();
    let x0: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let sys = SystemModel::linear(a, b).unwrap();
    let alpha = ParamVector(gain.transpose().iter().copied().chain(offset.iter().copied()).collect());
    let nominal = rollout(
        &sys,
        &ControllerTemplate::linear(n, m),
        &alpha,
        &x0,
        &DisturbanceSeq::zero(n, horizon),
        horizon,
    )
    .unwrap();
    let stages = nominal
        .states
        .iter()
        .map(|x| {
            let extra = rng.gen_range(0..=2usize);
            let rows = 2 * n + extra;
            let mut g = DMatrix::zeros(rows, n);
            let mut h = Vec::with_capacity(rows);
            for i in 0..n {
                g[(2 * i, i)] = 1.0;
                h.push(x[i] + rng.gen_range(0.05..1.0));
                g[(2 * i + 1, i)] = -1.0;
                h.push(-x[i] + rng.gen_range(0.05..1.0));
            }
            for r in 2 * n..rows {
                let mut dot = 0.0;
                for c in 0..n {
                    g[(r, c)] = rng.gen_range(-1.0..1.0);
                    dot += g[(r, c)] * x[c];
                }
                h.push(dot + rng.gen_range(0.05..1.0));
            }
            Polytope::new(g, h).unwrap()
        })
        .collect();
    Instance {
        sys,
        spec: StageSpec::new(stages).unwrap(),
        x0,
        gain,
        offset,
    }
}

fn oracle_equivalence() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst = 0.0f64;
    for i in 0..200 {
        let inst = random_instance(&mut rng);
        let (a, b) = inst.sys.linear_matrices().unwrap();
        let mats = build_farkas(a, b, &inst.spec, &inst.x0, &inst.gain, &inst.offset).map_err(|e| e.to_string())?;
        let (eps, status) = fixed_controller_resilience(&mats);
        ensure(status == ResilienceStatus::Exact, || format!("instance {i}: status {status:?}"))?;
        // row-major gain followed by the offset
        let alpha = ParamVector(inst.gain.transpose().iter().copied().chain(inst.offset.iter().copied()).collect());
        let oracle = vertex_oracle_resilience(&inst.sys, &inst.spec, &inst.x0, &alpha, &OracleConfig::default())
            .map_err(|e| e.to_string())?;
        let rel = (eps - oracle).abs() / eps;
        worst = worst.max(rel);
        ensure(rel <= 1e-6, || format!("instance {i}: closed form {eps:.9} vs corners {oracle:.9}"))?;
    }
    let t = within_time(start, Duration::from_secs(120))?;
    Ok(format!("200/200 instances agree, max relative gap {worst:.1e}, {t:.1} s"))
}

// ---------------------------------------------------------------- 4 and 5

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    v[v.len() / 2]
}

fn acc_scenarios(keep: &mut Option<AccRun>) -> Outcome {
    let start = Instant::now();
    let mut medians = Vec::new();
    for m in [10usize, 100, 500] {
        let mut eps = Vec::new();
        for seed in 0..5u64 {
            let betas: &[f64] = if m == 100 && seed == 0 { &[1e-2] } else { &[] };
            let run = acc_experiment(AccParams::default(), ControllerKind::Linear, m, seed, betas, &acc_solver_config(seed))
                .map_err(|e| e.to_string())?;
            let sol = &run.solution;
            ensure(sol.status == ResilienceStatus::Exact && sol.epsilon > 0.0 && sol.epsilon.is_finite(), || {
                format!("M={m} seed={seed}: epsilon {} status {:?}", sol.epsilon, sol.status)
            })?;
            let low = sol.margins.iter().copied().fold(f64::INFINITY, f64::min);
            ensure(sol.margins.len() == m && low >= -1e-9, || format!("M={m} seed={seed}: min margin {low:e}"))?;
            eps.push(sol.epsilon);
            if !betas.is_empty() {
                *keep = Some(run);
            }
        }
        medians.push(median(&mut eps));
    }
    let med100 = medians[1];
    ensure((0.01..=0.08).contains(&med100), || format!("M=100 median {med100:.4} outside [0.01, 0.08]"))?;
    ensure(medians.windows(2).all(|w| w[1] <= w[0]), || format!("medians not nonincreasing in M: {medians:.4?}"))?;
    let t = within_time(start, Duration::from_secs(600))?;
    Ok(format!(
        "median epsilon M=10/100/500: {:.4}/{:.4}/{:.4}, all margins >= -1e-9, {t:.1} s",
        medians[0], medians[1], medians[2]
    ))
}

fn certificate(run: Option<&AccRun>) -> Outcome {
    let run = run.ok_or("no solved instance from the scenario run")?;
    let start = Instant::now();
    let cert = run.certificates.first().ok_or("no certificate")?;
    let support = run.scenarios.subset(&cert.support_indices);
    let cfg = acc_solver_config(0);
    let again = resolve_from(&run.problem, &support, &cfg, &run.solution.trace.warm_start).map_err(|e| e.to_string())?;
    let gap = (again.epsilon - run.solution.epsilon).abs();
    ensure(gap <= 1e-6, || format!("support-only re-solve moved epsilon by {gap:e}"))?;
    let rate = empirical_violation(&run.problem, &run.solution, 10_000, 0xF2E5).map_err(|e| e.to_string())?;
    ensure(rate < cert.bound + 0.02, || format!("violation rate {rate:.4} >= bound {:.4} + 0.02", cert.bound))?;
    let t = start.elapsed().as_secs_f64();
    Ok(format!(
        "s = {}, support re-solve gap {gap:.1e}, fresh violation {rate:.4} < b = {:.4} + 0.02, {t:.1} s",
        cert.complexity, cert.bound
    ))
}

// ---------------------------------------------------------------- 6

fn properties() -> Outcome {
    let start = Instant::now();
    for (name, suite) in support::SUITES {
        suite().map_err(|e| format!("{name}: {e}"))?;
    }
    Ok(format!("{} suites, {:.1} s", support::SUITES.len(), start.elapsed().as_secs_f64()))
}

// ---------------------------------------------------------------- 7

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn resilo(args: &[&str]) -> Result<(i32, String), String> {
    let o = Command::new(env!("CARGO_BIN_EXE_resilo"))
        .args(args)
        .env_remove("RESILO_THREADS")
        .output()
        .map_err(|e| e.to_string())?;
    Ok((o.status.code().unwrap_or(-1), String::from_utf8_lossy(&o.stdout).into_owned()))
}

/// The report parses and re-serializes to the same bytes, its config matches
/// the input and still hashes to the recorded value.
fn check_report(path: &Path, original: &Path) -> Result<(), String> {
    let text = std::fs::read_to_string(path).map_err(|e| e.to_string())?;
    let report: RunReport = serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))?;
    let again = serde_json::to_string_pretty(&report).map_err(|e| e.to_string())? + "\n";
    ensure(again == text, || "report does not re-serialize byte-identically".into())?;
    let embedded = report.config.canonical_json().map_err(|e| e.to_string())?;
    let source = ProblemConfig::load(original).map_err(|e| e.to_string())?;
    ensure(source.canonical_json().ok() == Some(embedded), || "embedded config differs from the input".into())?;
    ensure(report.hash_matches().map_err(|e| e.to_string())?, || "config hash mismatch".into())
}

fn cli_round_trips() -> Outcome {
    let start = Instant::now();
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let out = |name: &str| dir.path().join(name).to_string_lossy().into_owned();
    let s = |p: &Path| p.to_string_lossy().into_owned();

    let integrator = fixture("scalar_integrator.json");
    let (code, _) = resilo(&["exact", &s(&integrator), "-o", &out("exact")])?;
    ensure(code == 0, || format!("exact exited {code}"))?;
    check_report(&dir.path().join("exact/report.json"), &integrator)?;

    let toy = fixture("toy_single_scenario.json");
    let (code, _) = resilo(&["scenario", &s(&toy), "-o", &out("scenario")])?;
    ensure(code == 0, || format!("scenario exited {code}"))?;
    check_report(&dir.path().join("scenario/report.json"), &toy)?;

    let (code, text) = resilo(&["bound", "8", "100", "1e-2"])?;
    ensure(code == 0 && text == "0.202080\n", || format!("bound exited {code} with {text:?}"))?;

    let report = dir.path().join("exact/report.json");
    let (code, text) = resilo(&["simulate", &s(&integrator), &s(&report), "--eps", "0.25", "-o", &out("sim")])?;
    ensure(code == 0 && text.ends_with("pass: 100/100  fail: 0/100\n"), || format!("simulate exited {code}: {text}"))?;

    for (name, want) in [("infeasible_start.json", 2), ("disjunction.json", 3), ("unconstrained.json", 0)] {
        let (code, _) = resilo(&["exact", &s(&fixture(name)), "-o", &out(name)])?;
        ensure(code == want, || format!("{name}: exit {code}, expected {want}"))?;
    }
    Ok(format!(
        "exact/scenario/bound/simulate round trip, exit codes 2/3/0 on error fixtures, {:.1} s",
        start.elapsed().as_secs_f64()
    ))
}

// ----------------------------------------------------------------

fn guarded(f: impl FnOnce() -> Outcome) -> Outcome {
    catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
        let msg = p
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_default();
        Err(format!("panicked: {msg}"))
    })
}

fn main() {
    let mut acc_run = None;
    let results = [
        (1, "risk-bound table", guarded(risk_table)),
        (2, "robot exact synthesis", guarded(robot)),
        (3, "closed form vs corner oracle", guarded(oracle_equivalence)),
        (4, "cruise-control scenario runs", guarded(|| acc_scenarios(&mut acc_run))),
        (5, "certificate self-consistency", guarded(|| certificate(acc_run.as_ref()))),
        (6, "property suites", guarded(properties)),
        (7, "CLI round trips", guarded(cli_round_trips)),
    ];
    let mut failed = 0;
    for (id, name, outcome) in &results {
        match outcome {
            Ok(detail) => println!("criterion {id}: PASS  {name}: {detail}"),
            Err(why) => {
                failed += 1;
                println!("criterion {id}: FAIL  {name}: {why}");
            }
        }
    }
    if failed > 0 {
        println!("{failed} of {} criteria failed", results.len());
        std::process::exit(1);
    }
    println!("all {} criteria passed", results.len());
}
