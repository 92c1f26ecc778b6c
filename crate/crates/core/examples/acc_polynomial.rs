//! Same cruise-control problem with a quadratic state-feedback law.
//! The extra freedom buys a larger resilience than the linear controller.

use resilo::casestudies::{acc_experiment, acc_solver_config, AccParams};
use resilo::dynamics::monomial_exponents;
use resilo::ControllerKind;

fn main() -> resilo::Result<()> {
    let (m, seed) = (100, 0);
    let cfg = acc_solver_config(seed);
    let t = std::time::Instant::now();
    let quad = acc_experiment(AccParams::default(), ControllerKind::Polynomial { degree: 2 }, m, seed, &[1e-2], &cfg)?;
    let lin = acc_experiment(AccParams::default(), ControllerKind::Linear, m, seed, &[], &cfg)?;
    println!("linear    epsilon = {:.5}", lin.solution.epsilon);
    println!("quadratic epsilon = {:.5} ({:.1?} total)", quad.solution.epsilon, t.elapsed());

    for (e, c) in monomial_exponents(2, 2).iter().zip(&quad.solution.alpha.0) {
        println!("  h^{} v^{}: {c:+.4e}", e[0], e[1]);
    }
    for c in &quad.certificates {
        println!("{}", c.statement());
    }
    Ok(())
}
