//! Cross-checks the closed-form resilience of a fixed linear controller
//! against brute-force enumeration of disturbance corners.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use resilo::linear::{controller_resilience, vertex_oracle_resilience, OracleConfig};
use resilo::{ParamVector, Polytope, StageSpec, SystemModel};

fn main() -> resilo::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst = 0.0f64;
    for trial in 0..10 {
        let (n, m, horizon) = (2, 1, 4);
        let a = DMatrix::from_fn(n, n, |i, j| if i == j { 1.0 } else { 0.0 } + rng.gen_range(-0.3..0.3));
        let b = DMatrix::from_fn(n, m, |_, _| rng.gen_range(-1.0..1.0));
        let sys = SystemModel::linear(a, b)?;
        let alpha = ParamVector((0..n * m + m).map(|_| rng.gen_range(-0.5..0.5)).collect());

        // a box around every nominal state, so the nominal run is feasible
        let nominal = resilo::rollout(
            &sys,
            &resilo::ControllerTemplate::linear(n, m),
            &alpha,
            &[0.0; 2],
            &resilo::DisturbanceSeq::zero(n, horizon),
            horizon,
        )?;
        let stages = nominal
            .states
            .iter()
            .map(|x| {
                let w: Vec<f64> = (0..n).map(|_| rng.gen_range(0.2..1.0)).collect();
                let lo: Vec<f64> = x.iter().zip(&w).map(|(v, w)| v - w).collect();
                let hi: Vec<f64> = x.iter().zip(&w).map(|(v, w)| v + w).collect();
                Polytope::from_box(&lo, &hi)
            })
            .collect::<resilo::Result<Vec<_>>>()?;
        let spec = StageSpec::new(stages)?;

        let (exact, _) = controller_resilience(&sys, &spec, &[0.0; 2], &alpha)?;
        let oracle = vertex_oracle_resilience(&sys, &spec, &[0.0; 2], &alpha, &OracleConfig::default())?;
        let rel = (exact - oracle).abs() / exact.max(1e-12);
        worst = worst.max(rel);
        println!("trial {trial}: closed form {exact:.8}  corners {oracle:.8}  rel diff {rel:.1e}");
    }
    println!("worst relative difference: {worst:.1e}");
    Ok(())
}
