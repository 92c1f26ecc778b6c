//! Building specifications from temporal operators, scoring trajectories
//! against them and flattening them into per-step polytopes.

use resilo::specs::{check_traj, margin};
use resilo::{Polytope, SpecExpr, Trajectory};

fn main() -> resilo::Result<()> {
    let goal = Polytope::from_box(&[0.8], &[1.2])?;
    let safe = Polytope::from_box(&[-2.0], &[2.0])?;
    let spec = SpecExpr::And(vec![
        SpecExpr::always(0, 4, safe.clone()),
        SpecExpr::eventually(2, 4, goal.clone()),
    ]);

    let runs = [
        ("reaches late", vec![0.0, 0.3, 0.5, 0.7, 1.0]),
        ("overshoots", vec![0.0, 1.0, 2.5, 1.0, 1.0]),
        ("never arrives", vec![0.0, 0.1, 0.2, 0.3, 0.4]),
    ];
    for (name, xs) in runs {
        let traj = Trajectory {
            states: xs.iter().map(|x| vec![*x]).collect(),
            inputs: vec![vec![0.0]; xs.len() - 1],
        };
        println!("{name:>14}: satisfied = {:5}  margin = {:+.3}", check_traj(&spec, &traj), margin(&spec, &traj));
    }

    // windowed reachability is a disjunction, so only the sampled path takes it
    println!("desugared: {:?}", spec.desugar(4)?);
    match spec.to_stage_spec(4, None) {
        Ok(_) => println!("product form available"),
        Err(e) => println!("no product form: {e}"),
    }

    // safety plus exact-time reachability keeps the product form
    let conj = SpecExpr::And(vec![SpecExpr::always(0, 4, safe), SpecExpr::next(3, goal)]);
    let stages = conj.to_stage_spec(4, None)?;
    let rows: Vec<usize> = stages.stages().iter().map(Polytope::rows).collect();
    println!("rows per step: {rows:?}");
    Ok(())
}
