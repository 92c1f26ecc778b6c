//! Property suites shared by the `properties` and `acceptance` targets.
//!
//! Each suite runs a fixed number of cases from a deterministic generator
//! and returns a description of the first counterexample.

use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use proptest::test_runner::{Config, RngAlgorithm, TestCaseError, TestRng, TestRunner};

use resilo::linear::{build_farkas, controller_resilience, fixed_controller_resilience, vertex_oracle_resilience, OracleConfig};
use resilo::scenario::{
    max_feasible_epsilon, risk_bound, sample_scenarios, solve_scenario_program, InnerValue, ScenarioSolverConfig,
};
use resilo::search::SearchConfig;
use resilo::specs::{check_traj, margin};
use resilo::{
    rollout, ControllerTemplate, DisturbanceSeq, InputBox, ParamVector, Polytope, Region, ScenarioProblem, SpecExpr,
    StageSpec, SystemModel, Trajectory,
};

pub type SuiteResult = Result<(), String>;

fn runner(cases: u32) -> TestRunner {
    let config = Config {
        cases,
        failure_persistence: None,
        ..Config::default()
    };
    TestRunner::new_with_rng(config, TestRng::deterministic_rng(RngAlgorithm::ChaCha))
}

fn check<S: Strategy>(cases: u32, strategy: S, test: impl Fn(S::Value) -> Result<(), TestCaseError>) -> SuiteResult {
    runner(cases).run(&strategy, test).map_err(|e| e.to_string())
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> SuiteResult {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

const N: usize = 4;

fn region() -> impl Strategy<Value = Region> {
    prop_oneof![
        (prop::array::uniform2(-2.0..2.0f64), prop::array::uniform2(0.0..2.0f64)).prop_map(|(lo, w)| {
            Polytope::from_box(&lo, &[lo[0] + w[0], lo[1] + w[1]]).unwrap().into()
        }),
        (prop::array::uniform2(-1.0..1.0f64), 0.0..2.0f64).prop_map(|(c, r)| Region::Ball {
            center: c.to_vec(),
            radius: r,
        }),
    ]
}

fn window() -> impl Strategy<Value = (usize, usize)> {
    (0..=N, 0..=N).prop_map(|(a, b)| (a.min(b), a.max(b)))
}

fn leaf() -> impl Strategy<Value = SpecExpr> {
    prop_oneof![
        (region(), 0..=N).prop_map(|(r, t)| SpecExpr::At { region: r, time: t }),
        (region(), 0..=N).prop_map(|(r, s)| SpecExpr::Next { steps: s, region: r }),
        (region(), window()).prop_map(|(r, (from, to))| SpecExpr::Always { from, to, region: r }),
        (region(), window()).prop_map(|(r, (from, to))| SpecExpr::Eventually { from, to, region: r }),
    ]
}

fn spec_tree() -> impl Strategy<Value = SpecExpr> {
    leaf().prop_recursive(3, 12, 3, |inner| {
        prop_oneof![
            prop::collection::vec(inner.clone(), 0..3).prop_map(SpecExpr::And),
            prop::collection::vec(inner, 0..3).prop_map(SpecExpr::Or),
        ]
    })
}

fn trajectory() -> impl Strategy<Value = Trajectory> {
    prop::collection::vec(prop::array::uniform2(-2.5..2.5f64), N + 1).prop_map(|xs| Trajectory {
        states: xs.iter().map(|x| x.to_vec()).collect(),
        inputs: vec![vec![0.0]; N],
    })
}

/// Membership of a scalar trajectory in `[-1, 1]` given by the bits of `pattern`.
fn pattern_traj(pattern: u32, len: usize) -> Trajectory {
    Trajectory {
        states: (0..len)
            .map(|k| vec![if pattern >> k & 1 == 1 { 0.0 } else { 5.0 }])
            .collect(),
        inputs: vec![vec![0.0]; len.saturating_sub(1)],
    }
}

fn matrix(r: usize, c: usize, range: f64) -> impl Strategy<Value = DMatrix<f64>> {
    prop::collection::vec(-range..range, r * c).prop_map(move |v| DMatrix::from_row_slice(r, c, &v))
}

/// Random linear system, linear controller, start state and disturbances.
fn linear_instance() -> impl Strategy<Value = (DMatrix<f64>, DMatrix<f64>, ParamVector, Vec<f64>, Vec<Vec<f64>>)> {
    (1..=3usize, 1..=2usize, 1..=5usize).prop_flat_map(|(n, m, horizon)| {
        (
            matrix(n, n, 1.2),
            matrix(n, m, 1.0),
            prop::collection::vec(-1.0..1.0f64, n * m + m).prop_map(ParamVector),
            prop::collection::vec(-1.0..1.0f64, n),
            prop::collection::vec(prop::collection::vec(-0.5..0.5f64, n), horizon),
        )
    })
}

/// Random nominal-feasible instance: every stage is a box around the nominal state.
fn feasible_instance() -> impl Strategy<Value = (SystemModel, StageSpec, Vec<f64>, ParamVector)> {
    (1..=2usize, 1..=2usize, 1..=3usize).prop_flat_map(|(n, m, horizon)| {
        (
            matrix(n, n, 1.0),
            matrix(n, m, 1.0),
            prop::collection::vec(-0.8..0.8f64, n * m + m),
            prop::collection::vec(-1.0..1.0f64, n),
            prop::collection::vec(prop::collection::vec(0.05..1.0f64, 2 * n), horizon + 1),
        )
            .prop_map(move |(a, b, alpha, x0, widths)| {
                let sys = SystemModel::linear(a, b).unwrap();
                let alpha = ParamVector(alpha);
                let nominal = rollout(&sys, &ControllerTemplate::linear(n, m), &alpha, &x0, &DisturbanceSeq::zero(n, horizon), horizon).unwrap();
                let stages = nominal
                    .states
                    .iter()
                    .zip(&widths)
                    .map(|(x, w)| {
                        let lo: Vec<f64> = (0..n).map(|i| x[i] - w[i]).collect();
                        let hi: Vec<f64> = (0..n).map(|i| x[i] + w[n + i]).collect();
                        Polytope::from_box(&lo, &hi).unwrap()
                    })
                    .collect();
                (sys, StageSpec::new(stages).unwrap(), x0, alpha)
            })
    })
}

fn scaled_rows(spec: &StageSpec, factors: &[f64]) -> StageSpec {
    let mut f = factors.iter().cycle();
    StageSpec::new(
        spec.stages()
            .iter()
            .map(|p| {
                let s: Vec<f64> = (0..p.rows()).map(|_| *f.next().unwrap()).collect();
                let g = DMatrix::from_fn(p.rows(), p.dim(), |r, c| p.g()[(r, c)] * s[r]);
                let h = p.h().iter().zip(&s).map(|(h, s)| h * s).collect();
                Polytope::new(g, h).unwrap()
            })
            .collect(),
    )
    .unwrap()
}

fn toy_problem() -> ScenarioProblem {
    let sys = SystemModel::linear(DMatrix::from_element(1, 1, 1.0), DMatrix::from_element(1, 1, 1.0)).unwrap();
    ScenarioProblem::new(
        sys,
        ControllerTemplate::linear(1, 1),
        vec![0.0],
        SpecExpr::always(1, 3, Polytope::from_box(&[-1.0], &[1.0]).unwrap()),
        InputBox::unbounded(1),
        3,
    )
    .unwrap()
}

fn feasible_value(v: InnerValue) -> f64 {
    match v {
        InnerValue::Feasible(e) => e,
        InnerValue::Unbounded => f64::INFINITY,
        InnerValue::Infeasible(_) => -1.0,
    }
}


pub fn margin_sign_matches_check() -> SuiteResult {
    check(1000, (spec_tree(), trajectory()), |(spec, traj)| {
        prop_assert_eq!(margin(&spec, &traj) >= 0.0, check_traj(&spec, &traj));
        Ok(())
    })
}

pub fn desugaring_preserves_truth_and_margin() -> SuiteResult {
    check(1000, (spec_tree(), trajectory()), |(spec, traj)| {
        let flat = spec.desugar(N).unwrap();
        prop_assert_eq!(check_traj(&flat, &traj), check_traj(&spec, &traj));
        prop_assert_eq!(margin(&flat, &traj), margin(&spec, &traj));
        Ok(())
    })
}

/// Every window operator over every membership pattern of a scalar trajectory.
pub fn desugar_semantics_exhaustive() -> SuiteResult {
    let unit = Polytope::from_box(&[-1.0], &[1.0]).unwrap();
    for horizon in 0..=6usize {
        for pattern in 0..1u32 << (horizon + 1) {
            let traj = pattern_traj(pattern, horizon + 1);
            let bit = |k: usize| pattern >> k & 1 == 1;
            let fail = |what: &str, a: usize, b: usize| format!("{what}[{a},{b}] N={horizon} pattern={pattern:b}");
            for from in 0..=horizon {
                let next = SpecExpr::next(from, unit.clone());
                ensure(check_traj(&next.desugar(horizon).unwrap(), &traj) == bit(from), || fail("next", from, from))?;
                for to in from..=horizon {
                    let always = SpecExpr::always(from, to, unit.clone());
                    let eventually = SpecExpr::eventually(from, to, unit.clone());
                    let all = (from..=to).all(bit);
                    let any = (from..=to).any(bit);
                    ensure(check_traj(&always, &traj) == all, || fail("always", from, to))?;
                    ensure(check_traj(&always.desugar(horizon).unwrap(), &traj) == all, || fail("always", from, to))?;
                    ensure(check_traj(&eventually, &traj) == any, || fail("eventually", from, to))?;
                    ensure(check_traj(&eventually.desugar(horizon).unwrap(), &traj) == any, || {
                        fail("eventually", from, to)
                    })?;
                }
            }
        }
    }
    Ok(())
}

pub fn closed_form_states_match_rollout() -> SuiteResult {
    check(300, linear_instance(), |(a, b, alpha, x0, d)| {
        let (n, m) = (a.nrows(), b.ncols());
        let horizon = d.len();
        let sys = SystemModel::linear(a.clone(), b.clone()).unwrap();
        let traj = rollout(&sys, &ControllerTemplate::linear(n, m), &alpha, &x0, &DisturbanceSeq::Raw(d.clone()), horizon)
            .unwrap();
        let (gain, offset) = alpha.linear_parts(n, m).unwrap();
        let closed = &a + &b * &gain;
        let drive = &b * DVector::from_column_slice(&offset);
        let pow = |k: usize| (0..k).fold(DMatrix::identity(n, n), |p, _| p * &closed);
        for (k, state) in traj.states.iter().enumerate() {
            // x_k = Abar^k x0 + sum_{i<k} Abar^i B a2 + sum_{j<k} Abar^(k-1-j) d_j
            let mut x = pow(k) * DVector::from_column_slice(&x0);
            for i in 0..k {
                x += pow(i) * &drive;
            }
            for (j, dj) in d.iter().enumerate().take(k) {
                x += pow(k - 1 - j) * DVector::from_column_slice(dj);
            }
            for i in 0..n {
                let scale = 1.0f64.max(x[i].abs());
                prop_assert!((x[i] - state[i]).abs() <= 1e-9 * scale, "k={} i={} {} vs {}", k, i, x[i], state[i]);
            }
        }
        Ok(())
    })
}

pub fn stage_spec_agrees_with_conjunctive_spec() -> SuiteResult {
    let boxes = prop::collection::vec(
        (0..=N, 0..=N, prop::array::uniform2(-2.0..2.0f64), prop::array::uniform2(0.0..3.0f64)),
        1..5,
    );
    check(300, (boxes, trajectory()), |(boxes, traj)| {
        let parts: Vec<SpecExpr> = boxes
            .iter()
            .map(|(a, b, lo, w)| {
                let p = Polytope::from_box(lo, &[lo[0] + w[0], lo[1] + w[1]]).unwrap();
                SpecExpr::always(*a.min(b), *a.max(b), p)
            })
            .collect();
        let spec = SpecExpr::And(parts);
        let stages = spec.to_stage_spec(N, None).unwrap();
        prop_assert_eq!(stages.satisfied_by(&traj), check_traj(&spec, &traj));
        Ok(())
    })
}

pub fn resilience_is_tight_against_corner_rollouts() -> SuiteResult {
    check(64, feasible_instance(), |(sys, spec, x0, alpha)| {
        let (eps, _) = controller_resilience(&sys, &spec, &x0, &alpha).unwrap();
        let oracle = vertex_oracle_resilience(&sys, &spec, &x0, &alpha, &OracleConfig::default()).unwrap();
        prop_assert!((eps - oracle).abs() <= 1e-6 * eps.max(1e-9), "{} vs {}", eps, oracle);
        Ok(())
    })
}

pub fn resilience_ignores_positive_row_scaling() -> SuiteResult {
    let factors = prop::collection::vec(0.01..100.0f64, 1..7);
    check(64, (feasible_instance(), factors), |((sys, spec, x0, alpha), factors)| {
        let (e1, s1) = controller_resilience(&sys, &spec, &x0, &alpha).unwrap();
        let (e2, s2) = controller_resilience(&sys, &scaled_rows(&spec, &factors), &x0, &alpha).unwrap();
        prop_assert_eq!(s1, s2);
        prop_assert!((e1 - e2).abs() <= 1e-12 * e1.max(1.0), "{} vs {}", e1, e2);
        Ok(())
    })
}

pub fn tightening_the_spec_never_raises_resilience() -> SuiteResult {
    check(64, (feasible_instance(), 0.0..0.04f64), |((sys, spec, x0, alpha), shrink)| {
        let (loose, _) = controller_resilience(&sys, &spec, &x0, &alpha).unwrap();
        let (tight, _) = controller_resilience(&sys, &spec.relaxed(-shrink), &x0, &alpha).unwrap();
        prop_assert!(tight <= loose + 1e-12);
        Ok(())
    })
}

pub fn risk_bound_monotone_grid() -> SuiteResult {
    for &m in &[1usize, 2, 5, 10, 50, 100, 500] {
        let mut prev: Option<Vec<f64>> = None;
        for &beta in &[0.5, 1e-1, 1e-2, 1e-4, 1e-6] {
            let row: Vec<f64> = (0..=m).map(|k| risk_bound(k, m, beta).unwrap()).collect();
            ensure(row.iter().all(|b| (0.0..=1.0).contains(b)), || format!("M={m} beta={beta}: out of [0, 1]"))?;
            ensure(row.windows(2).all(|w| w[1] >= w[0] - 1e-9), || format!("M={m} beta={beta}: decreasing in k"))?;
            ensure(row[m] == 1.0, || format!("M={m} beta={beta}: b(M) = {}", row[m]))?;
            if let Some(p) = &prev {
                ensure(p.iter().zip(&row).all(|(lo, hi)| *hi >= lo - 1e-9), || {
                    format!("M={m} beta={beta}: smaller beta shrank the bound")
                })?;
            }
            prev = Some(row);
        }
        if m >= 10 {
            let (wide, narrow) = (risk_bound(3, 2 * m, 1e-2).unwrap(), risk_bound(3, m, 1e-2).unwrap());
            ensure(wide < narrow, || format!("M={m}: doubling the scenarios did not tighten b(3)"))?;
        }
    }
    Ok(())
}

/// The unit box around the origin under an uncontrolled integrator tolerates
/// exactly `1/N` per step.
pub fn scalar_integrator_family() -> SuiteResult {
    let a = DMatrix::from_element(1, 1, 1.0);
    let unit = Polytope::from_box(&[-1.0], &[1.0]).unwrap();
    for n in 1..=8usize {
        let spec = StageSpec::new(vec![unit.clone(); n + 1]).unwrap();
        let mats = build_farkas(&a, &a, &spec, &[0.0], &DMatrix::zeros(1, 1), &[0.0]).unwrap();
        let eps = fixed_controller_resilience(&mats).0;
        ensure(eps == 1.0 / n as f64, || format!("N={n}: {eps}"))?;
    }
    Ok(())
}

pub fn more_scenarios_never_raise_fixed_controller_epsilon() -> SuiteResult {
    check(48, (0u64..1000, 1usize..20, 1usize..20, -1.5..0.0f64), |(seed, m, extra, gain)| {
        let problem = toy_problem();
        let cfg = ScenarioSolverConfig::default();
        let alpha = ParamVector(vec![gain, 0.0]);
        let small = sample_scenarios(1, 3, m, seed);
        let big = sample_scenarios(1, 3, m + extra, seed);
        let e_small = feasible_value(max_feasible_epsilon(&problem, &small, &cfg, &alpha).unwrap());
        let e_big = feasible_value(max_feasible_epsilon(&problem, &big, &cfg, &alpha).unwrap());
        prop_assert!(e_big <= e_small);
        let dup = feasible_value(max_feasible_epsilon(&problem, &small.duplicated(), &cfg, &alpha).unwrap());
        prop_assert_eq!(dup.to_bits(), e_small.to_bits());
        Ok(())
    })
}

/// Two solves of the same sampled program agree to the bit.
pub fn scenario_solve_is_deterministic() -> SuiteResult {
    check(12, (0u64..1000, 1usize..30), |(seed, m)| {
        let problem = toy_problem();
        let cfg = ScenarioSolverConfig {
            search: SearchConfig {
                seed,
                random_starts: 2,
                ..SearchConfig::default()
            },
            ..ScenarioSolverConfig::default()
        };
        let scenarios = sample_scenarios(1, 3, m, seed);
        let a = solve_scenario_program(&problem, &scenarios, &cfg).unwrap();
        let b = solve_scenario_program(&problem, &scenarios, &cfg).unwrap();
        prop_assert_eq!(a.epsilon.to_bits(), b.epsilon.to_bits());
        let bits = |s: &resilo::ScenarioSolution| s.alpha.0.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        prop_assert_eq!(bits(&a), bits(&b));
        let margin_bits = |s: &resilo::ScenarioSolution| s.margins.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        prop_assert_eq!(margin_bits(&a), margin_bits(&b));
        Ok(())
    })
}

#[allow(dead_code)]
pub const SUITES: &[(&str, fn() -> SuiteResult)] = &[
    ("margin sign matches check (1000 cases)", margin_sign_matches_check),
    ("desugaring preserves truth and margin", desugaring_preserves_truth_and_margin),
    ("desugar semantics, exhaustive N <= 6", desugar_semantics_exhaustive),
    ("closed-form states match rollout (1e-9)", closed_form_states_match_rollout),
    ("stage spec agrees with conjunctive spec", stage_spec_agrees_with_conjunctive_spec),
    ("resilience tight against corner rollouts", resilience_is_tight_against_corner_rollouts),
    ("resilience ignores row scaling", resilience_ignores_positive_row_scaling),
    ("tightening the spec never raises resilience", tightening_the_spec_never_raises_resilience),
    ("risk bound monotone grid", risk_bound_monotone_grid),
    ("scalar integrator family is 1/N", scalar_integrator_family),
    ("more scenarios never raise epsilon", more_scenarios_never_raise_fixed_controller_epsilon),
    ("scenario solve is deterministic", scenario_solve_is_deterministic),
];
