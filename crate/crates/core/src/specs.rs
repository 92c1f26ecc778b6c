//! Finite-horizon specifications over state trajectories.
//!
//! Two representations are used. [`StageSpec`] is a product of per-step
//! polytopes `Γ_0 × … × Γ_N`; it is what the exact linear path consumes.
//! [`SpecExpr`] is a boolean tree over time-indexed region memberships with
//! `next`/`always`/`eventually` sugar; the scenario path evaluates it directly
//! and conjunctive polytope-only trees convert to a [`StageSpec`].
//!
//! Sets are closed: a state on the boundary satisfies the atom.

use nalgebra::DMatrix;

use crate::dynamics::Trajectory;
use crate::error::{Error, Result};

/// `{x | G x <= H}`. Zero rows encode the whole state space.
#[derive(Debug, Clone, PartialEq)]
pub struct Polytope {
    g: DMatrix<f64>,
    h: Vec<f64>,
}

impl Polytope {
    pub fn new(g: DMatrix<f64>, h: Vec<f64>) -> Result<Self> {
        if g.nrows() != h.len() {
            return Err(Error::Spec(format!(
                "polytope has {} rows in G but {} entries in H",
                g.nrows(),
                h.len()
            )));
        }
        if g.ncols() == 0 {
            return Err(Error::Spec("polytope must have at least one column".into()));
        }
        Ok(Self { g, h })
    }

    pub fn unconstrained(n: usize) -> Self {
        Self {
            g: DMatrix::zeros(0, n),
            h: Vec::new(),
        }
    }

    /// Axis-aligned box; infinite bounds produce no row.
    pub fn from_box(lower: &[f64], upper: &[f64]) -> Result<Self> {
        if lower.len() != upper.len() || lower.is_empty() {
            return Err(Error::Spec("box bounds must be non-empty and of equal length".into()));
        }
        let n = lower.len();
        let mut rows: Vec<(Vec<f64>, f64)> = Vec::new();
        for i in 0..n {
            if lower[i] > upper[i] {
                return Err(Error::Spec(format!(
                    "box lower bound {} exceeds upper bound {} in coordinate {i}",
                    lower[i], upper[i]
                )));
            }
            if upper[i].is_finite() {
                let mut r = vec![0.0; n];
                r[i] = 1.0;
                rows.push((r, upper[i]));
            }
            if lower[i].is_finite() {
                let mut r = vec![0.0; n];
                r[i] = -1.0;
                rows.push((r, -lower[i]));
            }
        }
        let g = DMatrix::from_fn(rows.len(), n, |r, c| rows[r].0[c]);
        let h = rows.into_iter().map(|(_, b)| b).collect();
        Ok(Self { g, h })
    }

    pub fn g(&self) -> &DMatrix<f64> {
        &self.g
    }

    pub fn h(&self) -> &[f64] {
        &self.h
    }

    pub fn rows(&self) -> usize {
        self.h.len()
    }

    pub fn dim(&self) -> usize {
        self.g.ncols()
    }

    fn row_dot(&self, r: usize, x: &[f64]) -> f64 {
        let mut acc = 0.0;
        for (c, xc) in x.iter().enumerate() {
            acc += self.g[(r, c)] * xc;
        }
        acc
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        (0..self.rows()).all(|r| self.row_dot(r, x) <= self.h[r])
    }

    /// `min_j (H_j - G_j x)`, `+inf` with no rows.
    pub fn margin(&self, x: &[f64]) -> f64 {
        (0..self.rows())
            .map(|r| self.h[r] - self.row_dot(r, x))
            .fold(f64::INFINITY, f64::min)
    }

    /// Stacks the rows of `other` below those of `self`.
    pub fn intersect(&self, other: &Polytope) -> Result<Polytope> {
        if self.dim() != other.dim() {
            return Err(Error::Dimension(format!(
                "cannot intersect polytopes of dimension {} and {}",
                self.dim(),
                other.dim()
            )));
        }
        let q = self.rows() + other.rows();
        let mut g = DMatrix::zeros(q, self.dim());
        g.rows_mut(0, self.rows()).copy_from(&self.g);
        g.rows_mut(self.rows(), other.rows()).copy_from(&other.g);
        let mut h = self.h.clone();
        h.extend_from_slice(&other.h);
        Ok(Polytope { g, h })
    }

    /// Midpoint of the axis-aligned bounds when every coordinate is bounded
    /// on both sides by a `±e_i` row.
    pub fn box_center(&self) -> Option<Vec<f64>> {
        let n = self.dim();
        let mut lo = vec![f64::NEG_INFINITY; n];
        let mut hi = vec![f64::INFINITY; n];
        for r in 0..self.rows() {
            let row = self.g.row(r);
            let nz: Vec<usize> = (0..n).filter(|&c| row[c] != 0.0).collect();
            if let [c] = nz[..] {
                let coef = row[c];
                let bound = self.h[r] / coef;
                if coef > 0.0 {
                    hi[c] = hi[c].min(bound);
                } else {
                    lo[c] = lo[c].max(bound);
                }
            }
        }
        (0..n)
            .all(|i| lo[i].is_finite() && hi[i].is_finite())
            .then(|| (0..n).map(|i| 0.5 * (lo[i] + hi[i])).collect())
    }
}

/// A set a state can be required to lie in.
#[derive(Debug, Clone, PartialEq)]
pub enum Region {
    Polytope(Polytope),
    /// Closed Euclidean ball; scenario path only.
    Ball { center: Vec<f64>, radius: f64 },
}

impl Region {
    pub fn dim(&self) -> usize {
        match self {
            Region::Polytope(p) => p.dim(),
            Region::Ball { center, .. } => center.len(),
        }
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        match self {
            Region::Polytope(p) => p.contains(x),
            Region::Ball { center, radius } => sq_dist(x, center) <= radius * radius,
        }
    }

    /// Polytope: `min_j (H_j - G_j x)`. Ball: `r^2 - |x - c|^2`.
    pub fn margin(&self, x: &[f64]) -> f64 {
        match self {
            Region::Polytope(p) => p.margin(x),
            Region::Ball { center, radius } => radius * radius - sq_dist(x, center),
        }
    }
}

fn sq_dist(x: &[f64], c: &[f64]) -> f64 {
    x.iter().zip(c).map(|(a, b)| (a - b) * (a - b)).sum()
}

impl From<Polytope> for Region {
    fn from(p: Polytope) -> Self {
        Region::Polytope(p)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SpecExpr {
    /// The state at `time` lies in `region`.
    At { region: Region, time: usize },
    And(Vec<SpecExpr>),
    Or(Vec<SpecExpr>),
    /// Exact-time reachability: in `region` at step `steps`.
    Next { steps: usize, region: Region },
    /// In `region` at every step of `from..=to`.
    Always { from: usize, to: usize, region: Region },
    /// In `region` at some step of `from..=to`.
    Eventually { from: usize, to: usize, region: Region },
}

impl SpecExpr {
    pub fn at(region: impl Into<Region>, time: usize) -> Self {
        SpecExpr::At {
            region: region.into(),
            time,
        }
    }

    pub fn ball(center: Vec<f64>, radius: f64, time: usize) -> Self {
        SpecExpr::At {
            region: Region::Ball { center, radius },
            time,
        }
    }

    pub fn next(steps: usize, region: impl Into<Region>) -> Self {
        SpecExpr::Next {
            steps,
            region: region.into(),
        }
    }

    pub fn always(from: usize, to: usize, region: impl Into<Region>) -> Self {
        SpecExpr::Always {
            from,
            to,
            region: region.into(),
        }
    }

    pub fn eventually(from: usize, to: usize, region: impl Into<Region>) -> Self {
        SpecExpr::Eventually {
            from,
            to,
            region: region.into(),
        }
    }

    /// Largest time index referenced.
    pub fn max_time(&self) -> usize {
        match self {
            SpecExpr::At { time, .. } => *time,
            SpecExpr::Next { steps, .. } => *steps,
            SpecExpr::Always { to, .. } | SpecExpr::Eventually { to, .. } => *to,
            SpecExpr::And(c) | SpecExpr::Or(c) => c.iter().map(SpecExpr::max_time).max().unwrap_or(0),
        }
    }

    /// Checks time windows against `horizon` and region dimensions against `n`.
    pub fn validate(&self, horizon: usize, n: usize) -> Result<()> {
        let check_region = |r: &Region| -> Result<()> {
            if r.dim() != n {
                return Err(Error::Dimension(format!(
                    "region has dimension {}, state has {n}",
                    r.dim()
                )));
            }
            if let Region::Ball { radius, .. } = r {
                if !(*radius >= 0.0) {
                    return Err(Error::Spec(format!("ball radius must be >= 0, got {radius}")));
                }
            }
            Ok(())
        };
        let check_time = |t: usize| -> Result<()> {
            if t > horizon {
                return Err(Error::Spec(format!("time index {t} exceeds horizon {horizon}")));
            }
            Ok(())
        };
        match self {
            SpecExpr::At { region, time } => {
                check_time(*time)?;
                check_region(region)
            }
            SpecExpr::Next { steps, region } => {
                check_time(*steps)?;
                check_region(region)
            }
            SpecExpr::Always { from, to, region } | SpecExpr::Eventually { from, to, region } => {
                if from > to {
                    return Err(Error::Spec(format!("window [{from}, {to}] is empty")));
                }
                check_time(*to)?;
                check_region(region)
            }
            SpecExpr::And(c) | SpecExpr::Or(c) => c.iter().try_for_each(|e| e.validate(horizon, n)),
        }
    }

    /// Rewrites temporal sugar into `At`/`And`/`Or` only.
    pub fn desugar(&self, horizon: usize) -> Result<SpecExpr> {
        let window = |from: usize, to: usize| -> Result<std::ops::RangeInclusive<usize>> {
            if from > to {
                return Err(Error::Spec(format!("window [{from}, {to}] is empty")));
            }
            if to > horizon {
                return Err(Error::Spec(format!("time index {to} exceeds horizon {horizon}")));
            }
            Ok(from..=to)
        };
        let wrap = |mut parts: Vec<SpecExpr>, and: bool| {
            if parts.len() == 1 {
                parts.pop().unwrap()
            } else if and {
                SpecExpr::And(parts)
            } else {
                SpecExpr::Or(parts)
            }
        };
        Ok(match self {
            SpecExpr::At { time, .. } => {
                window(*time, *time)?;
                self.clone()
            }
            SpecExpr::Next { steps, region } => {
                window(*steps, *steps)?;
                SpecExpr::at(region.clone(), *steps)
            }
            SpecExpr::Always { from, to, region } => wrap(
                window(*from, *to)?.map(|i| SpecExpr::at(region.clone(), i)).collect(),
                true,
            ),
            SpecExpr::Eventually { from, to, region } => wrap(
                window(*from, *to)?.map(|i| SpecExpr::at(region.clone(), i)).collect(),
                false,
            ),
            SpecExpr::And(c) => SpecExpr::And(c.iter().map(|e| e.desugar(horizon)).collect::<Result<_>>()?),
            SpecExpr::Or(c) => SpecExpr::Or(c.iter().map(|e| e.desugar(horizon)).collect::<Result<_>>()?),
        })
    }

    pub fn has_ball(&self) -> bool {
        match self {
            SpecExpr::At { region, .. }
            | SpecExpr::Next { region, .. }
            | SpecExpr::Always { region, .. }
            | SpecExpr::Eventually { region, .. } => matches!(region, Region::Ball { .. }),
            SpecExpr::And(c) | SpecExpr::Or(c) => c.iter().any(SpecExpr::has_ball),
        }
    }

    pub fn has_or(&self) -> bool {
        match self {
            SpecExpr::Or(_) => true,
            SpecExpr::Eventually { from, to, .. } => from != to,
            SpecExpr::And(c) => c.iter().any(SpecExpr::has_or),
            _ => false,
        }
    }

    /// Product-of-polytopes form. Fails on disjunctions and ball atoms.
    pub fn to_stage_spec(&self, horizon: usize, state_box: Option<&Polytope>) -> Result<StageSpec> {
        if self.has_ball() {
            return Err(Error::BallAtom);
        }
        let flat = self.desugar(horizon)?;
        let n = match state_box {
            Some(b) => b.dim(),
            None => first_dim(&flat).ok_or_else(|| Error::Spec("specification has no atoms".into()))?,
        };
        let mut stages: Vec<Polytope> = (0..=horizon)
            .map(|_| state_box.cloned().unwrap_or_else(|| Polytope::unconstrained(n)))
            .collect();
        fn collect(e: &SpecExpr, stages: &mut [Polytope]) -> Result<()> {
            match e {
                SpecExpr::At {
                    region: Region::Polytope(p),
                    time,
                } => {
                    stages[*time] = stages[*time].intersect(p)?;
                    Ok(())
                }
                SpecExpr::At { .. } => Err(Error::BallAtom),
                SpecExpr::And(c) => c.iter().try_for_each(|e| collect(e, stages)),
                SpecExpr::Or(_) => Err(Error::NotProductForm),
                _ => unreachable!("desugared"),
            }
        }
        collect(&flat, &mut stages)?;
        StageSpec::new(stages)
    }
}

fn first_dim(e: &SpecExpr) -> Option<usize> {
    match e {
        SpecExpr::At { region, .. }
        | SpecExpr::Next { region, .. }
        | SpecExpr::Always { region, .. }
        | SpecExpr::Eventually { region, .. } => Some(region.dim()),
        SpecExpr::And(c) | SpecExpr::Or(c) => c.iter().find_map(first_dim),
    }
}

/// `true` iff the trajectory satisfies `expr`. Atoms past the trajectory's
/// horizon are unsatisfied.
pub fn check_traj(expr: &SpecExpr, traj: &Trajectory) -> bool {
    check_states(expr, &traj.states)
}

pub(crate) fn check_states(expr: &SpecExpr, states: &[Vec<f64>]) -> bool {
    let holds = |region: &Region, k: usize| states.get(k).is_some_and(|x| region.contains(x));
    match expr {
        SpecExpr::At { region, time } => holds(region, *time),
        SpecExpr::Next { steps, region } => holds(region, *steps),
        SpecExpr::Always { from, to, region } => (*from..=*to).all(|k| holds(region, k)),
        SpecExpr::Eventually { from, to, region } => (*from..=*to).any(|k| holds(region, k)),
        SpecExpr::And(c) => c.iter().all(|e| check_states(e, states)),
        SpecExpr::Or(c) => c.iter().any(|e| check_states(e, states)),
    }
}

/// Quantitative satisfaction: `>= 0` exactly when [`check_traj`] holds.
/// Conjunction takes the minimum, disjunction the maximum.
pub fn margin(expr: &SpecExpr, traj: &Trajectory) -> f64 {
    margin_states(expr, &traj.states)
}

pub(crate) fn margin_states(expr: &SpecExpr, states: &[Vec<f64>]) -> f64 {
    let at = |region: &Region, k: usize| states.get(k).map_or(f64::NEG_INFINITY, |x| region.margin(x));
    match expr {
        SpecExpr::At { region, time } => at(region, *time),
        SpecExpr::Next { steps, region } => at(region, *steps),
        SpecExpr::Always { from, to, region } => {
            (*from..=*to).map(|k| at(region, k)).fold(f64::INFINITY, f64::min)
        }
        SpecExpr::Eventually { from, to, region } => {
            (*from..=*to).map(|k| at(region, k)).fold(f64::NEG_INFINITY, f64::max)
        }
        SpecExpr::And(c) => c
            .iter()
            .map(|e| margin_states(e, states))
            .fold(f64::INFINITY, f64::min),
        SpecExpr::Or(c) => c
            .iter()
            .map(|e| margin_states(e, states))
            .fold(f64::NEG_INFINITY, f64::max),
    }
}

/// `Γ_0 × Γ_1 × … × Γ_N`.
#[derive(Debug, Clone, PartialEq)]
pub struct StageSpec {
    stages: Vec<Polytope>,
}

impl StageSpec {
    pub fn new(stages: Vec<Polytope>) -> Result<Self> {
        let n = stages
            .first()
            .ok_or_else(|| Error::Spec("stage spec needs at least one stage".into()))?
            .dim();
        if stages.iter().any(|s| s.dim() != n) {
            return Err(Error::Dimension("all stages must share the state dimension".into()));
        }
        Ok(Self { stages })
    }

    /// Every stage is the whole state space.
    pub fn unconstrained(n: usize, horizon: usize) -> Self {
        Self {
            stages: vec![Polytope::unconstrained(n); horizon + 1],
        }
    }

    pub fn stages(&self) -> &[Polytope] {
        &self.stages
    }

    pub fn horizon(&self) -> usize {
        self.stages.len() - 1
    }

    pub fn state_dim(&self) -> usize {
        self.stages[0].dim()
    }

    pub fn total_rows(&self) -> usize {
        self.stages.iter().map(Polytope::rows).sum()
    }

    pub fn contains(&self, states: &[Vec<f64>]) -> bool {
        states.len() == self.stages.len() && self.stages.iter().zip(states).all(|(s, x)| s.contains(x))
    }

    pub fn satisfied_by(&self, traj: &Trajectory) -> bool {
        self.contains(&traj.states)
    }

    /// Same stages with every `H` entry shifted by `delta` (per stage).
    pub fn relaxed(&self, delta: f64) -> Self {
        Self {
            stages: self
                .stages
                .iter()
                .map(|s| Polytope {
                    g: s.g.clone(),
                    h: s.h.iter().map(|v| v + delta).collect(),
                })
                .collect(),
        }
    }
}

/// Componentwise bounds on the input; entries may be infinite.
#[derive(Debug, Clone, PartialEq)]
pub struct InputBox {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl InputBox {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::Dimension("input box bounds differ in length".into()));
        }
        if lower.iter().zip(&upper).any(|(l, u)| !(l <= u)) {
            return Err(Error::Spec("input box lower bound exceeds upper bound".into()));
        }
        Ok(Self { lower, upper })
    }

    pub fn unbounded(m: usize) -> Self {
        Self {
            lower: vec![f64::NEG_INFINITY; m],
            upper: vec![f64::INFINITY; m],
        }
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn is_unbounded(&self) -> bool {
        self.lower.iter().all(|v| *v == f64::NEG_INFINITY) && self.upper.iter().all(|v| *v == f64::INFINITY)
    }

    /// `min_i min(u_i - lower_i, upper_i - u_i)`.
    pub fn margin(&self, u: &[f64]) -> f64 {
        u.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .map(|(v, (lo, hi))| (v - lo).min(hi - v))
            .fold(f64::INFINITY, f64::min)
    }

    /// Widest finite coordinate range, if any.
    pub fn finite_width(&self) -> Option<f64> {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(l, u)| u - l)
            .filter(|w| w.is_finite())
            .reduce(f64::max)
    }
}
