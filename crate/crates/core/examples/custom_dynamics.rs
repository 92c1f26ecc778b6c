//! Plugging a user-defined nonlinear system into the scenario path: a
//! damped pendulum that has to be swung into a band around upright.

use std::collections::BTreeMap;
use std::sync::Arc;

use resilo::scenario::{certify, sample_scenarios, solve_scenario_program, ScenarioSolverConfig};
use resilo::{ControllerTemplate, DynamicsMap, DynamicsRegistry, InputBox, Polytope, ScenarioProblem, SpecExpr};

#[derive(Debug)]
struct Pendulum {
    dt: f64,
    damping: f64,
}

impl DynamicsMap for Pendulum {
    fn name(&self) -> &str {
        "pendulum"
    }

    fn state_dim(&self) -> usize {
        2
    }

    fn input_dim(&self) -> usize {
        1
    }

    fn step(&self, x: &[f64], u: &[f64], out: &mut [f64]) {
        let (th, om) = (x[0], x[1]);
        out[0] = th + self.dt * om;
        out[1] = om + self.dt * (9.81 * th.sin() - self.damping * om + u[0]);
    }

    fn params(&self) -> BTreeMap<String, f64> {
        BTreeMap::from([("dt".into(), self.dt), ("damping".into(), self.damping)])
    }
}

fn main() -> resilo::Result<()> {
    let mut registry = DynamicsRegistry::with_builtins();
    registry.register("pendulum", |p| {
        Ok(Arc::new(Pendulum {
            dt: p.get("dt").copied().unwrap_or(0.1),
            damping: p.get("damping").copied().unwrap_or(0.5),
        }) as Arc<dyn DynamicsMap>)
    });
    let map = registry.build("pendulum", &BTreeMap::new())?;
    let sys = resilo::SystemModel::nonlinear(map);

    let horizon = 5;
    let upright = Polytope::from_box(&[-0.1, -1.0], &[0.1, 1.0])?;
    let spec = SpecExpr::always(3, horizon, upright);
    let problem = ScenarioProblem::new(
        sys.clone(),
        ControllerTemplate::linear(2, 1),
        vec![0.3, 0.0],
        spec,
        InputBox::new(vec![-20.0], vec![20.0])?,
        horizon,
    )?;

    let scenarios = sample_scenarios(2, horizon, 50, 11);
    let cfg = ScenarioSolverConfig::default();
    let sol = solve_scenario_program(&problem, &scenarios, &cfg)?;
    println!("epsilon = {:.5} ({:?}), alpha = {:?}", sol.epsilon, sol.status, sol.alpha.0);
    for c in certify(&problem, &sol, &scenarios, &[1e-3], &cfg)? {
        println!("{}", c.statement());
    }
    Ok(())
}
