//! Exact resilience synthesis for a planar robot that must pass through one
//! region, settle in another and never leave the workspace.

use resilo::casestudies::{robot_experiment, RobotCase, RobotConfig};
use resilo::check_traj;

fn main() -> resilo::Result<()> {
    let t = std::time::Instant::now();
    let run = robot_experiment(&RobotConfig::default())?;
    let r = &run.result;
    println!("epsilon = {:.6} ({:?}) in {:.2?}", r.epsilon, r.status, t.elapsed());
    println!("alpha_1 = {:?}", &r.alpha.0[..4]);
    println!("alpha_2 = {:?}", &r.alpha.0[4..]);

    let spec = RobotCase::new().spec();
    for (k, x) in run.nominal.states.iter().enumerate() {
        println!("  k={k}  x = ({:+.4}, {:+.4})", x[0], x[1]);
    }
    let ok = run.within.iter().filter(|t| check_traj(&spec, t)).count();
    println!("random rollouts at epsilon satisfying the spec: {ok}/{}", run.within.len());
    if let Some(bad) = &run.exceeding {
        println!("corner rollout at 1.2 epsilon satisfies the spec: {}", check_traj(&spec, bad));
    }

    // the binding rows: smallest slack-to-weight ratios
    let mut rows: Vec<_> = r.diagnostics.rows.iter().filter_map(|d| d.ratio.map(|q| (q, d))).collect();
    rows.sort_by(|a, b| a.0.total_cmp(&b.0));
    for (q, d) in rows.iter().take(4) {
        println!("  stage {} row {}: slack {:.4}, weight {:.4}, ratio {q:.6}", d.stage, d.row, d.slack, d.weight);
    }
    Ok(())
}
