//! Discrete-time systems, feedback controller templates and closed-loop rollout.
//!
//! A system evolves as `x(k+1) = f(x(k), u(k)) + d(k)` with `u(k) = pi_alpha(x(k))`.
//! Linear systems carry their `(A, B)` matrices; nonlinear systems are named maps
//! implementing [`DynamicsMap`], looked up through a [`DynamicsRegistry`].
//!
//! Parameter layout is fixed so that a parameter vector means the same thing in
//! every config file and report:
//!
//! * linear template: `alpha_1` (m x n, row-major) followed by `alpha_2` (m entries);
//! * polynomial template: an m x D(n, l) matrix, row-major, multiplying
//!   [`monomial_basis`]. Monomials are graded by total degree and ordered
//!   lexicographically (by descending exponent of `x_1`, then `x_2`, ...) within
//!   each degree block, e.g. `1, x1, x2, x1^2, x1*x2, x2^2` for n = 2, l = 2.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A named nonlinear map `f(x, u)`.
pub trait DynamicsMap: Send + Sync + fmt::Debug {
    fn name(&self) -> &str;
    fn state_dim(&self) -> usize;
    fn input_dim(&self) -> usize;
    /// Writes `f(x, u)` into `out`.
    fn step(&self, x: &[f64], u: &[f64], out: &mut [f64]);
    /// Per-coordinate gain applied to a normalized disturbance `eps * delta`
    /// before it is added to the state. `None` means unit gain.
    fn disturbance_gain(&self) -> Option<&[f64]> {
        None
    }
    /// Parameters needed to rebuild this map through the registry.
    fn params(&self) -> BTreeMap<String, f64> {
        BTreeMap::new()
    }
}

#[derive(Debug, Clone)]
pub enum Dynamics {
    Linear { a: DMatrix<f64>, b: DMatrix<f64> },
    Nonlinear(Arc<dyn DynamicsMap>),
}

#[derive(Debug, Clone)]
pub struct SystemModel {
    state_dim: usize,
    input_dim: usize,
    dynamics: Dynamics,
}

impl SystemModel {
    pub fn linear(a: DMatrix<f64>, b: DMatrix<f64>) -> Result<Self> {
        let n = a.nrows();
        if n == 0 || a.ncols() != n {
            return Err(Error::Dimension(format!(
                "A must be square and non-empty, got {}x{}",
                a.nrows(),
                a.ncols()
            )));
        }
        if b.nrows() != n || b.ncols() == 0 {
            return Err(Error::Dimension(format!(
                "B must be {n}xm with m >= 1, got {}x{}",
                b.nrows(),
                b.ncols()
            )));
        }
        Ok(Self {
            state_dim: n,
            input_dim: b.ncols(),
            dynamics: Dynamics::Linear { a, b },
        })
    }

    pub fn nonlinear(map: Arc<dyn DynamicsMap>) -> Self {
        Self {
            state_dim: map.state_dim(),
            input_dim: map.input_dim(),
            dynamics: Dynamics::Nonlinear(map),
        }
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn dynamics(&self) -> &Dynamics {
        &self.dynamics
    }

    pub fn linear_matrices(&self) -> Option<(&DMatrix<f64>, &DMatrix<f64>)> {
        match &self.dynamics {
            Dynamics::Linear { a, b } => Some((a, b)),
            Dynamics::Nonlinear(_) => None,
        }
    }

    pub fn disturbance_gain(&self) -> Option<&[f64]> {
        match &self.dynamics {
            Dynamics::Linear { .. } => None,
            Dynamics::Nonlinear(map) => map.disturbance_gain(),
        }
    }

    /// Writes `f(x, u)` (without disturbance) into `out`.
    pub fn step_into(&self, x: &[f64], u: &[f64], out: &mut [f64]) {
        match &self.dynamics {
            Dynamics::Linear { a, b } => {
                for i in 0..self.state_dim {
                    let mut acc = 0.0;
                    for j in 0..self.state_dim {
                        acc += a[(i, j)] * x[j];
                    }
                    for j in 0..self.input_dim {
                        acc += b[(i, j)] * u[j];
                    }
                    out[i] = acc;
                }
            }
            Dynamics::Nonlinear(map) => map.step(x, u, out),
        }
    }
}

type MapBuilder = dyn Fn(&BTreeMap<String, f64>) -> Result<Arc<dyn DynamicsMap>> + Send + Sync;

/// Name -> constructor table for nonlinear maps.
///
/// [`DynamicsRegistry::with_builtins`] knows `"acc"`; applications can
/// [`register`](DynamicsRegistry::register) their own maps.
pub struct DynamicsRegistry {
    builders: BTreeMap<String, Box<MapBuilder>>,
}

impl DynamicsRegistry {
    pub fn empty() -> Self {
        Self {
            builders: BTreeMap::new(),
        }
    }

    pub fn with_builtins() -> Self {
        let mut reg = Self::empty();
        reg.register("acc", |params| {
            let acc = crate::casestudies::AccParams::from_overrides(params)?;
            Ok(Arc::new(crate::casestudies::AccDynamics::new(acc)) as Arc<dyn DynamicsMap>)
        });
        reg
    }

    pub fn register<F>(&mut self, name: &str, builder: F)
    where
        F: Fn(&BTreeMap<String, f64>) -> Result<Arc<dyn DynamicsMap>> + Send + Sync + 'static,
    {
        self.builders.insert(name.to_string(), Box::new(builder));
    }

    pub fn build(&self, name: &str, params: &BTreeMap<String, f64>) -> Result<Arc<dyn DynamicsMap>> {
        let builder = self
            .builders
            .get(name)
            .ok_or_else(|| Error::UnknownDynamics(name.to_string()))?;
        builder(params)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.builders.keys().map(String::as_str)
    }
}

impl Default for DynamicsRegistry {
    fn default() -> Self {
        Self::with_builtins()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ControllerKind {
    Linear,
    Polynomial { degree: usize },
}

/// Binomial coefficient as an exact integer.
pub fn binomial(n: u64, k: u64) -> u64 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u64 = 1;
    for i in 0..k {
        acc = acc * (n - i) / (i + 1);
    }
    acc
}

/// Number of distinct monomials of total degree exactly `degree` in `n` variables.
pub fn monomials_of_degree(n: usize, degree: usize) -> usize {
    binomial((n + degree - 1) as u64, (n - 1) as u64) as usize
}

/// Number of monomials of degree up to `degree` in `n` variables, `C(n + l, n)`.
pub fn basis_len(n: usize, degree: usize) -> usize {
    binomial((n + degree) as u64, n as u64) as usize
}

/// Exponent vectors in graded lexicographic order.
pub fn monomial_exponents(n: usize, degree: usize) -> Vec<Vec<u32>> {
    fn fill(n: usize, pos: usize, left: u32, cur: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if pos + 1 == n {
            cur[pos] = left;
            out.push(cur.clone());
            return;
        }
        for e in (0..=left).rev() {
            cur[pos] = e;
            fill(n, pos + 1, left - e, cur, out);
        }
        cur[pos] = 0;
    }

    let mut out = Vec::with_capacity(basis_len(n, degree));
    let mut cur = vec![0u32; n];
    for d in 0..=degree as u32 {
        fill(n, 0, d, &mut cur, &mut out);
    }
    out
}

fn eval_monomial(exp: &[u32], x: &[f64]) -> f64 {
    exp.iter()
        .zip(x)
        .fold(1.0, |acc, (&e, &xi)| if e == 0 { acc } else { acc * xi.powi(e as i32) })
}

/// Monomials of `x` up to total degree `degree`, graded lexicographic order.
pub fn monomial_basis(x: &[f64], degree: usize) -> Vec<f64> {
    monomial_exponents(x.len(), degree)
        .iter()
        .map(|e| eval_monomial(e, x))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControllerTemplate {
    kind: ControllerKind,
    state_dim: usize,
    input_dim: usize,
    exponents: Vec<Vec<u32>>,
}

impl ControllerTemplate {
    pub fn new(kind: ControllerKind, state_dim: usize, input_dim: usize) -> Self {
        let exponents = match kind {
            ControllerKind::Linear => Vec::new(),
            ControllerKind::Polynomial { degree } => monomial_exponents(state_dim, degree),
        };
        Self {
            kind,
            state_dim,
            input_dim,
            exponents,
        }
    }

    pub fn linear(state_dim: usize, input_dim: usize) -> Self {
        Self::new(ControllerKind::Linear, state_dim, input_dim)
    }

    pub fn polynomial(state_dim: usize, input_dim: usize, degree: usize) -> Self {
        Self::new(ControllerKind::Polynomial { degree }, state_dim, input_dim)
    }

    pub fn for_system(kind: ControllerKind, sys: &SystemModel) -> Self {
        Self::new(kind, sys.state_dim(), sys.input_dim())
    }

    pub fn kind(&self) -> ControllerKind {
        self.kind
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    /// Number of scalar features the input is linear in.
    pub fn feature_len(&self) -> usize {
        match self.kind {
            ControllerKind::Linear => self.state_dim + 1,
            ControllerKind::Polynomial { .. } => self.exponents.len(),
        }
    }

    pub fn param_count(&self) -> usize {
        match self.kind {
            ControllerKind::Linear => self.input_dim * self.state_dim + self.input_dim,
            ControllerKind::Polynomial { .. } => self.input_dim * self.exponents.len(),
        }
    }

    pub fn check(&self, alpha: &ParamVector) -> Result<()> {
        if alpha.len() != self.param_count() {
            return Err(Error::ParamShape {
                expected: self.param_count(),
                got: alpha.len(),
            });
        }
        Ok(())
    }

    pub fn eval(&self, alpha: &ParamVector, x: &[f64]) -> Result<Vec<f64>> {
        self.check(alpha)?;
        if x.len() != self.state_dim {
            return Err(Error::Dimension(format!(
                "state has length {}, template expects {}",
                x.len(),
                self.state_dim
            )));
        }
        let mut u = vec![0.0; self.input_dim];
        self.eval_into(alpha.as_slice(), x, &mut u);
        Ok(u)
    }

    /// Unchecked evaluation; callers guarantee shapes.
    pub(crate) fn eval_into(&self, alpha: &[f64], x: &[f64], u: &mut [f64]) {
        let (n, m) = (self.state_dim, self.input_dim);
        match self.kind {
            ControllerKind::Linear => {
                let (gain, offset) = alpha.split_at(m * n);
                for r in 0..m {
                    let row = &gain[r * n..(r + 1) * n];
                    u[r] = row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + offset[r];
                }
            }
            ControllerKind::Polynomial { .. } => {
                let width = self.exponents.len();
                u.iter_mut().for_each(|v| *v = 0.0);
                for (j, exp) in self.exponents.iter().enumerate() {
                    let mono = eval_monomial(exp, x);
                    for r in 0..m {
                        u[r] += alpha[r * width + j] * mono;
                    }
                }
            }
        }
    }

    /// Feature vector the controller output is linear in: `(x, 1)` for the
    /// linear template, the monomial basis for polynomial templates.
    pub fn features(&self, x: &[f64]) -> Vec<f64> {
        match self.kind {
            ControllerKind::Linear => x.iter().copied().chain(std::iter::once(1.0)).collect(),
            ControllerKind::Polynomial { .. } => {
                self.exponents.iter().map(|e| eval_monomial(e, x)).collect()
            }
        }
    }

    /// Linear map `T` such that the controller with parameters `T z` equals
    /// the controller whose features are taken around `center`, i.e.
    /// `u(x) = z * features(x - center)` in the template's own layout.
    pub fn recentering_matrix(&self, center: &[f64]) -> DMatrix<f64> {
        let (n, m) = (self.state_dim, self.input_dim);
        let d = self.param_count();
        let mut t = DMatrix::zeros(d, d);
        match self.kind {
            ControllerKind::Linear => {
                // u = K (x - c) + b  =>  alpha_1 = K, alpha_2 = b - K c
                for i in 0..d {
                    t[(i, i)] = 1.0;
                }
                for r in 0..m {
                    for j in 0..n {
                        t[(m * n + r, r * n + j)] = -center[j];
                    }
                }
            }
            ControllerKind::Polynomial { .. } => {
                let width = self.exponents.len();
                let index: BTreeMap<&[u32], usize> = self
                    .exponents
                    .iter()
                    .enumerate()
                    .map(|(i, e)| (e.as_slice(), i))
                    .collect();
                // (x - c)^e = sum_{j <= e} prod_i C(e_i, j_i) x_i^{j_i} (-c_i)^{e_i - j_i}
                for (src, exp) in self.exponents.iter().enumerate() {
                    let mut sub = vec![0u32; n];
                    loop {
                        let coeff: f64 = (0..n)
                            .map(|i| {
                                binomial(exp[i] as u64, sub[i] as u64) as f64
                                    * (-center[i]).powi((exp[i] - sub[i]) as i32)
                            })
                            .product();
                        let dst = index[sub.as_slice()];
                        for r in 0..m {
                            t[(r * width + dst, r * width + src)] += coeff;
                        }
                        // odometer over 0..=exp[i]
                        let mut i = 0;
                        while i < n {
                            if sub[i] < exp[i] {
                                sub[i] += 1;
                                break;
                            }
                            sub[i] = 0;
                            i += 1;
                        }
                        if i == n {
                            break;
                        }
                    }
                }
            }
        }
        t
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ParamVector(pub Vec<f64>);

impl ParamVector {
    pub fn zeros(len: usize) -> Self {
        Self(vec![0.0; len])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    /// Linear parameters from `alpha_1` (m x n) and `alpha_2` (m).
    pub fn from_linear(gain: &DMatrix<f64>, offset: &[f64]) -> Self {
        let mut v = Vec::with_capacity(gain.len() + offset.len());
        for r in 0..gain.nrows() {
            for c in 0..gain.ncols() {
                v.push(gain[(r, c)]);
            }
        }
        v.extend_from_slice(offset);
        Self(v)
    }

    /// Splits linear parameters into `(alpha_1, alpha_2)`.
    pub fn linear_parts(&self, n: usize, m: usize) -> Result<(DMatrix<f64>, Vec<f64>)> {
        if self.len() != m * n + m {
            return Err(Error::ParamShape {
                expected: m * n + m,
                got: self.len(),
            });
        }
        let gain = DMatrix::from_row_slice(m, n, &self.0[..m * n]);
        Ok((gain, self.0[m * n..].to_vec()))
    }

    /// Re-expresses linear parameters for a degree-1 polynomial template:
    /// each output row becomes `[alpha_2[r], alpha_1[r, ..]]`.
    pub fn linear_to_polynomial(&self, n: usize, m: usize) -> Result<Self> {
        let (gain, offset) = self.linear_parts(n, m)?;
        let mut v = Vec::with_capacity(m * (n + 1));
        for r in 0..m {
            v.push(offset[r]);
            v.extend(gain.row(r).iter());
        }
        Ok(Self(v))
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub states: Vec<Vec<f64>>,
    pub inputs: Vec<Vec<f64>>,
}

impl Trajectory {
    pub fn zeroed(n: usize, m: usize, horizon: usize) -> Self {
        Self {
            states: vec![vec![0.0; n]; horizon + 1],
            inputs: vec![vec![0.0; m]; horizon],
        }
    }

    pub fn horizon(&self) -> usize {
        self.inputs.len()
    }
}

/// Disturbance sequence `d(0..N-1)`.
#[derive(Debug, Clone, PartialEq)]
pub enum DisturbanceSeq {
    /// Already scaled disturbances added to the state as-is.
    Raw(Vec<Vec<f64>>),
    /// `d(k) = epsilon * gain ∘ delta_k`, with `|delta_k|_inf <= 1`.
    Normalized { deltas: Vec<Vec<f64>>, epsilon: f64 },
}

impl DisturbanceSeq {
    pub fn zero(n: usize, horizon: usize) -> Self {
        DisturbanceSeq::Raw(vec![vec![0.0; n]; horizon])
    }

    pub fn normalized(deltas: Vec<Vec<f64>>, epsilon: f64) -> Result<Self> {
        if epsilon < 0.0 {
            return Err(Error::InvalidArgument(format!("epsilon must be >= 0, got {epsilon}")));
        }
        if let Some(bad) = deltas.iter().flatten().find(|v| v.abs() > 1.0 || v.is_nan()) {
            return Err(Error::InvalidArgument(format!(
                "normalized disturbance entry {bad} outside [-1, 1]"
            )));
        }
        Ok(DisturbanceSeq::Normalized { deltas, epsilon })
    }

    pub fn len(&self) -> usize {
        match self {
            DisturbanceSeq::Raw(d) => d.len(),
            DisturbanceSeq::Normalized { deltas, .. } => deltas.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn view(&self) -> DistView<'_> {
        match self {
            DisturbanceSeq::Raw(d) => DistView::Raw(d),
            DisturbanceSeq::Normalized { deltas, epsilon } => DistView::Scaled {
                deltas,
                epsilon: *epsilon,
            },
        }
    }
}

#[derive(Clone, Copy)]
pub(crate) enum DistView<'a> {
    Raw(&'a [Vec<f64>]),
    Scaled { deltas: &'a [Vec<f64>], epsilon: f64 },
}

/// Closed-loop rollout over `horizon` steps.
pub fn rollout(
    sys: &SystemModel,
    template: &ControllerTemplate,
    alpha: &ParamVector,
    x0: &[f64],
    dist: &DisturbanceSeq,
    horizon: usize,
) -> Result<Trajectory> {
    template.check(alpha)?;
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
    if dist.len() != horizon {
        return Err(Error::Dimension(format!(
            "disturbance has {} steps, horizon is {horizon}",
            dist.len()
        )));
    }
    let bad_width = match dist {
        DisturbanceSeq::Raw(d) => d.iter().any(|v| v.len() != n),
        DisturbanceSeq::Normalized { deltas, .. } => deltas.iter().any(|v| v.len() != n),
    };
    if bad_width {
        return Err(Error::Dimension(format!("disturbance vectors must have length {n}")));
    }
    let mut traj = Trajectory::zeroed(n, m, horizon);
    rollout_into(sys, template, alpha.as_slice(), x0, dist.view(), &mut traj)?;
    Ok(traj)
}

/// Allocation-free rollout into a pre-shaped trajectory. Shapes are not checked.
pub(crate) fn rollout_into(
    sys: &SystemModel,
    template: &ControllerTemplate,
    alpha: &[f64],
    x0: &[f64],
    dist: DistView<'_>,
    traj: &mut Trajectory,
) -> Result<()> {
    let gain = sys.disturbance_gain();
    traj.states[0].copy_from_slice(x0);
    for k in 0..traj.inputs.len() {
        let (head, tail) = traj.states.split_at_mut(k + 1);
        let x = &head[k];
        let next = &mut tail[0];
        let u = &mut traj.inputs[k];
        template.eval_into(alpha, x, u);
        sys.step_into(x, u, next);
        match dist {
            DistView::Raw(d) => {
                for (xi, di) in next.iter_mut().zip(&d[k]) {
                    *xi += di;
                }
            }
            DistView::Scaled { deltas, epsilon } => {
                for (i, (xi, di)) in next.iter_mut().zip(&deltas[k]).enumerate() {
                    let g = gain.map_or(1.0, |g| g[i]);
                    *xi += epsilon * g * di;
                }
            }
        }
        if next.iter().any(|v| !v.is_finite()) {
            return Err(Error::RolloutDivergence { step: k + 1 });
        }
    }
    Ok(())
}
