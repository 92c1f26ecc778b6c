//! Scenario-based resilience of an adaptive cruise controller with a linear
//! feedback law, plus the violation-probability certificate.
//!
//! Usage: `cargo run --release --example acc_linear -- [M] [seed]`

use resilo::casestudies::{acc_experiment, acc_solver_config, AccParams};
use resilo::scenario::empirical_violation;
use resilo::ControllerKind;

fn main() -> resilo::Result<()> {
    let mut args = std::env::args().skip(1);
    let m: usize = args.next().map_or(Ok(100), |s| s.parse()).expect("M must be an integer");
    let seed: u64 = args.next().map_or(Ok(0), |s| s.parse()).expect("seed must be an integer");

    let t = std::time::Instant::now();
    let cfg = acc_solver_config(seed);
    let run = acc_experiment(AccParams::default(), ControllerKind::Linear, m, seed, &[1e-2, 1e-4, 1e-6], &cfg)?;
    let sol = &run.solution;
    println!("M = {m}, seed = {seed} ({:.1?})", t.elapsed());
    println!("epsilon*  = {:.5}", sol.epsilon);
    println!("alpha_1*  = [{:.3}, {:.3}]", sol.alpha.0[0], sol.alpha.0[1]);
    println!("alpha_2*  = {:.2}", sol.alpha.0[2]);
    if let Some(c) = run.certificates.first() {
        println!("s*        = {} (support scenarios {:?})", c.complexity, c.support_indices);
    }
    for c in &run.certificates {
        println!("b(s*, beta = {:.0e}) = {:.4}", c.beta, c.bound);
    }

    // what the certificate promises, checked on fresh draws
    let fresh = empirical_violation(&run.problem, sol, 10_000, seed.wrapping_add(1_000))?;
    println!("violation rate on 10^4 fresh scenarios: {fresh:.4}");
    Ok(())
}
