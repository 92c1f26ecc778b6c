use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::specs::StageSpec;

/// Slack below `-FEASIBILITY_TOL` marks the nominal trajectory as violating.
pub const FEASIBILITY_TOL: f64 = 1e-9;

/// Matrices of the robust constraint `E Y <= F / eps` for all `|Y|_inf <= 1`,
/// with `Y = [0, d_0, …, d_{N-1}] / eps`.
///
/// Row block `k` of `E` is `[0, G_k Ā^{k-1}, …, G_k Ā, G_k, 0, …]` and
/// `F_k = H_k - G_k Ā^k x - G_k (Σ_{i<k} Ā^i) B alpha_2`, where
/// `Ā = A + B alpha_1`. `A_b = [I; -I]` and `B_b = 1` encode the unit box.
#[derive(Debug, Clone)]
pub struct FarkasMatrices {
    pub a_b: DMatrix<f64>,
    pub b_b: DVector<f64>,
    pub e: DMatrix<f64>,
    pub f: DVector<f64>,
    /// `(stage, row within stage)` for every row of `E`/`F`.
    pub row_index: Vec<(usize, usize)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ResilienceStatus {
    Exact,
    NominalInfeasible,
    Unbounded,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RowDiagnostic {
    pub stage: usize,
    pub row: usize,
    pub slack: f64,
    pub weight: f64,
    /// `slack / weight`, `None` when the row ignores the disturbance.
    pub ratio: Option<f64>,
}

pub fn build_farkas(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    spec: &StageSpec,
    x0: &[f64],
    gain: &DMatrix<f64>,
    offset: &[f64],
) -> Result<FarkasMatrices> {
    let n = a.nrows();
    let m = b.ncols();
    if spec.state_dim() != n || x0.len() != n {
        return Err(Error::Dimension(format!(
            "spec dimension {} and x0 length {} must equal state dimension {n}",
            spec.state_dim(),
            x0.len()
        )));
    }
    if gain.nrows() != m || gain.ncols() != n || offset.len() != m {
        return Err(Error::Dimension(format!(
            "controller gain must be {m}x{n} with offset of length {m}"
        )));
    }
    let horizon = spec.horizon();
    let cols = n * (horizon + 1);
    let q = spec.total_rows();

    let closed = a + b * gain;
    let b_offset = b * DVector::from_column_slice(offset);
    let x = DVector::from_column_slice(x0);

    // powers[i] = Ā^i
    let mut powers = Vec::with_capacity(horizon + 1);
    powers.push(DMatrix::<f64>::identity(n, n));
    for i in 1..=horizon {
        let next = &powers[i - 1] * &closed;
        powers.push(next);
    }

    let mut e = DMatrix::zeros(q, cols);
    let mut f = DVector::zeros(q);
    let mut row_index = Vec::with_capacity(q);
    let mut drift = DVector::zeros(n); // (Σ_{i<k} Ā^i) B alpha_2
    let mut r0 = 0;
    for (k, stage) in spec.stages().iter().enumerate() {
        if k > 0 {
            drift = &closed * &drift + &b_offset;
        }
        let g = stage.g();
        let nominal = &powers[k] * &x + &drift;
        let gx = g * &nominal;
        for j in 1..=k {
            let block = g * &powers[k - j];
            e.view_mut((r0, j * n), (stage.rows(), n)).copy_from(&block);
        }
        for r in 0..stage.rows() {
            f[r0 + r] = stage.h()[r] - gx[r];
            row_index.push((k, r));
        }
        r0 += stage.rows();
    }

    let mut a_b = DMatrix::zeros(2 * cols, cols);
    a_b.view_mut((0, 0), (cols, cols)).fill_with_identity();
    a_b.view_mut((cols, 0), (cols, cols)).fill_with_identity();
    a_b.view_mut((cols, 0), (cols, cols)).neg_mut();

    Ok(FarkasMatrices {
        a_b,
        b_b: DVector::from_element(2 * cols, 1.0),
        e,
        f,
        row_index,
    })
}

impl FarkasMatrices {
    /// `|row_r(E)|_1` for every row.
    pub fn row_weights(&self) -> Vec<f64> {
        self.e.row_iter().map(|r| r.iter().map(|v| v.abs()).sum()).collect()
    }

    pub fn diagnostics(&self) -> Vec<RowDiagnostic> {
        self.row_weights()
            .into_iter()
            .enumerate()
            .map(|(i, w)| {
                let (stage, row) = self.row_index[i];
                RowDiagnostic {
                    stage,
                    row,
                    slack: self.f[i],
                    weight: w,
                    ratio: (w > 0.0).then(|| self.f[i].max(0.0) / w),
                }
            })
            .collect()
    }

    /// Nominal violation summary: `(violated rows, largest violation)`.
    pub fn nominal_violation(&self) -> (usize, f64) {
        self.f.iter().filter(|v| **v < -FEASIBILITY_TOL).fold((0, 0.0), |(c, worst), v| (c + 1, f64::max(worst, -v)))
    }
}

/// Largest `eps` for the fixed controller the matrices were built with.
///
/// Minimizing `P B_b` over `P >= 0` with `P A_b = E` and `A_b = [I; -I]`
/// gives `|row_r(E)|_1` per row, so `eps = min_r F_r / |row_r(E)|_1`.
pub fn fixed_controller_resilience(mats: &FarkasMatrices) -> (f64, ResilienceStatus) {
    if mats.f.iter().any(|v| *v < -FEASIBILITY_TOL) {
        return (0.0, ResilienceStatus::NominalInfeasible);
    }
    let eps = mats
        .row_weights()
        .into_iter()
        .zip(mats.f.iter())
        .filter(|(w, _)| *w > 0.0)
        .map(|(w, f)| f.max(0.0) / w)
        .fold(f64::INFINITY, f64::min);
    if eps.is_infinite() {
        (f64::INFINITY, ResilienceStatus::Unbounded)
    } else {
        (eps, ResilienceStatus::Exact)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::specs::Polytope;

    fn abs_le_one() -> Polytope {
        Polytope::new(DMatrix::from_row_slice(2, 1, &[1.0, -1.0]), vec![1.0, 1.0]).unwrap()
    }

    fn scalar() -> (DMatrix<f64>, DMatrix<f64>) {
        (DMatrix::from_element(1, 1, 1.0), DMatrix::from_element(1, 1, 1.0))
    }

    #[test]
    fn scalar_integrator_one_step() {
        let (a, b) = scalar();
        let spec = StageSpec::new(vec![abs_le_one(), abs_le_one()]).unwrap();
        let mats = build_farkas(&a, &b, &spec, &[0.0], &DMatrix::zeros(1, 1), &[0.0]).unwrap();
        assert_eq!(mats.e.shape(), (4, 2));
        assert_eq!(mats.e.as_slice(), &[0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0, -1.0]);
        assert_eq!(mats.f.as_slice(), &[1.0, 1.0, 1.0, 1.0]);
        assert_eq!(mats.a_b.shape(), (4, 2));
        assert_eq!(mats.b_b.as_slice(), &[1.0; 4]);
        assert_eq!(fixed_controller_resilience(&mats), (1.0, ResilienceStatus::Exact));
    }

    #[test]
    fn integrator_family_one_over_n() {
        let (a, b) = scalar();
        for n in 1..=8usize {
            let spec = StageSpec::new(vec![abs_le_one(); n + 1]).unwrap();
            let mats = build_farkas(&a, &b, &spec, &[0.0], &DMatrix::zeros(1, 1), &[0.0]).unwrap();
            let (eps, st) = fixed_controller_resilience(&mats);
            assert_eq!(st, ResilienceStatus::Exact);
            assert_eq!(eps, 1.0 / n as f64);
        }
    }

    #[test]
    fn deadbeat_only_latest_disturbance() {
        // Ā = 1 + 1 * (-1) = 0
        let (a, b) = scalar();
        let spec = StageSpec::new(vec![abs_le_one(); 4]).unwrap();
        let mats = build_farkas(&a, &b, &spec, &[0.3], &DMatrix::from_element(1, 1, -1.0), &[0.0]).unwrap();
        for (i, &(k, _)) in mats.row_index.iter().enumerate() {
            for j in 0..=3 {
                let expect = if k >= 1 && j == k { 1.0 } else { 0.0 };
                assert_eq!(mats.e[(i, j)].abs(), expect, "row {i} col {j}");
            }
        }
    }

    #[test]
    fn initial_violation_is_infeasible() {
        let (a, b) = scalar();
        let spec = StageSpec::new(vec![abs_le_one(), abs_le_one()]).unwrap();
        let mats = build_farkas(&a, &b, &spec, &[2.0], &DMatrix::zeros(1, 1), &[0.0]).unwrap();
        assert_eq!(
            fixed_controller_resilience(&mats),
            (0.0, ResilienceStatus::NominalInfeasible)
        );
        assert_eq!(mats.nominal_violation().0, 2);
    }

    #[test]
    fn no_rows_is_unbounded() {
        let (a, b) = scalar();
        let spec = StageSpec::unconstrained(1, 3);
        let mats = build_farkas(&a, &b, &spec, &[5.0], &DMatrix::zeros(1, 1), &[0.0]).unwrap();
        assert_eq!(
            fixed_controller_resilience(&mats),
            (f64::INFINITY, ResilienceStatus::Unbounded)
        );
    }

    #[test]
    fn rows_insensitive_to_disturbance_do_not_bound() {
        let (a, b) = scalar();
        let spec = StageSpec::new(vec![abs_le_one(), Polytope::unconstrained(1)]).unwrap();
        let mats = build_farkas(&a, &b, &spec, &[0.0], &DMatrix::zeros(1, 1), &[0.0]).unwrap();
        assert_eq!(fixed_controller_resilience(&mats).1, ResilienceStatus::Unbounded);
    }
}
