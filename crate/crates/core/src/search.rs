//! Derivative-free multi-start search shared by the exact and scenario paths.
//!
//! The engine minimizes; callers pass the negated objective. Parameters are
//! searched in affine coordinates `alpha = T (s * z)` where `T` re-centers the
//! controller features at the initial state and `s` is a scalar input scale,
//! so that unit steps in `z` move the input by comparable amounts in every
//! direction.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{ControllerTemplate, ParamVector};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SearchConfig {
    /// Random starts in addition to the deterministic ones.
    pub random_starts: usize,
    pub seed: u64,
    /// Objective evaluations allowed per start (all restarts included).
    pub max_evals: usize,
    /// Stop when every vertex is within this distance of the best one.
    pub simplex_tol: f64,
    /// Edge length of the initial simplex, in search coordinates.
    pub initial_step: f64,
    /// Random starts are drawn uniformly from `[-random_scale, random_scale]^d`.
    pub random_scale: f64,
    /// Fresh-simplex restarts from the incumbent after convergence.
    pub restarts: usize,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            random_starts: 8,
            seed: 0,
            max_evals: 2000,
            simplex_tol: 1e-6,
            initial_step: 0.5,
            random_scale: 1.0,
            restarts: 3,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LocalResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub evals: usize,
    pub converged: bool,
}

fn sanitize(v: f64) -> f64 {
    if v.is_nan() {
        f64::INFINITY
    } else {
        v
    }
}

/// Nelder–Mead with standard coefficients (reflect 1, expand 2, contract 1/2,
/// shrink 1/2).
pub fn nelder_mead<F>(f: &F, x0: &[f64], step: f64, max_evals: usize, tol: f64) -> LocalResult
where
    F: Fn(&[f64]) -> f64 + ?Sized,
{
    let d = x0.len();
    let mut evals = 0usize;
    let eval = |x: &[f64], evals: &mut usize| {
        *evals += 1;
        sanitize(f(x))
    };
    if d == 0 {
        let value = eval(x0, &mut evals);
        return LocalResult {
            x: Vec::new(),
            value,
            evals,
            converged: true,
        };
    }

    let mut simplex: Vec<Vec<f64>> = Vec::with_capacity(d + 1);
    simplex.push(x0.to_vec());
    for i in 0..d {
        let mut v = x0.to_vec();
        v[i] += step;
        simplex.push(v);
    }
    let mut values: Vec<f64> = simplex.iter().map(|v| eval(v, &mut evals)).collect();

    let mut converged = false;
    while evals < max_evals {
        // stable sort keeps ties in insertion order
        let mut order: Vec<usize> = (0..=d).collect();
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        simplex = order.iter().map(|&i| simplex[i].clone()).collect();
        values = order.iter().map(|&i| values[i]).collect();

        let diameter = simplex[1..]
            .iter()
            .map(|v| v.iter().zip(&simplex[0]).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
            .fold(0.0, f64::max);
        if diameter < tol {
            converged = true;
            break;
        }

        let mut centroid = vec![0.0; d];
        for v in &simplex[..d] {
            for (c, x) in centroid.iter_mut().zip(v) {
                *c += x / d as f64;
            }
        }
        let worst = simplex[d].clone();
        let along = |t: f64| -> Vec<f64> {
            centroid.iter().zip(&worst).map(|(c, w)| c + t * (c - w)).collect()
        };

        let reflected = along(1.0);
        let fr = eval(&reflected, &mut evals);
        if fr < values[0] {
            let expanded = along(2.0);
            let fe = eval(&expanded, &mut evals);
            if fe < fr {
                simplex[d] = expanded;
                values[d] = fe;
            } else {
                simplex[d] = reflected;
                values[d] = fr;
            }
            continue;
        }
        if fr < values[d - 1] {
            simplex[d] = reflected;
            values[d] = fr;
            continue;
        }
        let (contracted, fc) = if fr < values[d] {
            let c = along(0.5);
            let fc = eval(&c, &mut evals);
            (c, fc)
        } else {
            let c = along(-0.5);
            let fc = eval(&c, &mut evals);
            (c, fc)
        };
        if fc < values[d].min(fr) {
            simplex[d] = contracted;
            values[d] = fc;
            continue;
        }
        // shrink towards the best vertex
        let best = simplex[0].clone();
        for i in 1..=d {
            let v: Vec<f64> = simplex[i].iter().zip(&best).map(|(x, b)| b + 0.5 * (x - b)).collect();
            values[i] = eval(&v, &mut evals);
            simplex[i] = v;
        }
    }

    let best = (0..=d).min_by(|&a, &b| values[a].total_cmp(&values[b])).unwrap();
    LocalResult {
        x: simplex[best].clone(),
        value: values[best],
        evals,
        converged,
    }
}

/// Nelder–Mead followed by up to `restarts` fresh-simplex restarts from the
/// incumbent, sharing one evaluation budget. Restarts stop once one fails to
/// improve.
pub fn nelder_mead_restarting<F>(f: &F, x0: &[f64], cfg: &SearchConfig) -> LocalResult
where
    F: Fn(&[f64]) -> f64 + ?Sized,
{
    let mut res = nelder_mead(f, x0, cfg.initial_step, cfg.max_evals, cfg.simplex_tol);
    let mut step = cfg.initial_step;
    for _ in 0..cfg.restarts {
        let left = cfg.max_evals.saturating_sub(res.evals);
        if left <= x0.len() + 1 {
            break;
        }
        step *= 0.5;
        let next = nelder_mead(f, &res.x, step, left, cfg.simplex_tol);
        let improved = next.value < res.value;
        let evals = res.evals + next.evals;
        if improved {
            res = LocalResult { evals, ..next };
        } else {
            res.evals = evals;
            res.converged = next.converged;
            break;
        }
    }
    res
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StartTrace {
    pub start_index: usize,
    pub origin: String,
    #[serde(with = "crate::report::f64_or_inf")]
    pub initial_value: f64,
    #[serde(with = "crate::report::f64_or_inf")]
    pub final_value: f64,
    pub evals: usize,
    pub converged: bool,
}

/// Runs [`nelder_mead_restarting`] from every start. Starts run in parallel;
/// results come back in start order.
pub fn multistart<F>(f: &F, starts: &[(String, Vec<f64>)], cfg: &SearchConfig) -> Vec<(LocalResult, StartTrace)>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    starts
        .par_iter()
        .enumerate()
        .map(|(i, (origin, z))| {
            let initial_value = sanitize(f(z));
            let res = nelder_mead_restarting(f, z, cfg);
            let trace = StartTrace {
                start_index: i,
                origin: origin.clone(),
                initial_value,
                final_value: res.value,
                evals: res.evals + 1,
                converged: res.converged,
            };
            (res, trace)
        })
        .collect()
}

/// Uniform random starts, reproducible from `cfg.seed`.
pub fn random_starts(d: usize, cfg: &SearchConfig) -> Vec<(String, Vec<f64>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    (0..cfg.random_starts)
        .map(|i| {
            let z = (0..d)
                .map(|_| rng.gen_range(-cfg.random_scale..=cfg.random_scale))
                .collect();
            (format!("random#{i}"), z)
        })
        .collect()
}

/// Affine search coordinates for a controller template.
#[derive(Debug, Clone)]
pub struct ParamCoords {
    to_alpha: DMatrix<f64>,
    from_alpha: DMatrix<f64>,
}

impl ParamCoords {
    /// Features re-centered at `center`, every coordinate scaled by `input_scale`.
    pub fn new(template: &ControllerTemplate, center: &[f64], input_scale: f64) -> Self {
        let t = template.recentering_matrix(center) * input_scale;
        let inv = t
            .clone()
            .try_inverse()
            .expect("re-centering is unit triangular up to scale");
        Self {
            to_alpha: t,
            from_alpha: inv,
        }
    }

    pub fn identity(d: usize) -> Self {
        Self {
            to_alpha: DMatrix::identity(d, d),
            from_alpha: DMatrix::identity(d, d),
        }
    }

    pub fn dim(&self) -> usize {
        self.to_alpha.nrows()
    }

    pub fn to_alpha(&self, z: &[f64]) -> ParamVector {
        let a = &self.to_alpha * DVector::from_column_slice(z);
        ParamVector(a.as_slice().to_vec())
    }

    pub fn from_alpha(&self, alpha: &ParamVector) -> Vec<f64> {
        let z = &self.from_alpha * DVector::from_column_slice(alpha.as_slice());
        z.as_slice().to_vec()
    }
}

/// Index of the best candidate: highest objective, then smallest parameter
/// norm, then lowest index.
pub fn pick_best(candidates: &[(f64, ParamVector)]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, (v, a)) in candidates.iter().enumerate() {
        best = match best {
            None => Some(i),
            Some(b) => {
                let (bv, ba) = &candidates[b];
                if *v > *bv || (*v == *bv && a.norm() < ba.norm()) {
                    Some(i)
                } else {
                    Some(b)
                }
            }
        };
    }
    best
}
