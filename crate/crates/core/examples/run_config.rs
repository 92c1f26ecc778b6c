//! Runs a JSON problem file the way the `exact` / `scenario` subcommands do,
//! without touching the filesystem beyond reading the config.
//!
//! Usage: `cargo run --release --example run_config -- crates/core/configs/robot.json`

use resilo::cli::{exact_report, scenario_report};
use resilo::config::SystemConfig;
use resilo::ProblemConfig;

fn main() -> resilo::Result<()> {
    let path = std::env::args()
        .nth(1)
        .unwrap_or_else(|| concat!(env!("CARGO_MANIFEST_DIR"), "/configs/robot.json").to_string());
    let cfg = ProblemConfig::load(path.as_ref())?;
    let exact = matches!(cfg.system, SystemConfig::Linear { .. }) && cfg.input_box.is_none() && cfg.spec.to_expr()?.to_stage_spec(cfg.horizon, None).is_ok();
    let report = if exact { exact_report(&cfg)?.0 } else { scenario_report(&cfg)?.0 };
    println!("config {} ({:?})", &report.config_hash[..12], report.method);
    println!("epsilon = {} ({:?})", report.epsilon, report.status);
    println!("alpha = {:?}", report.alpha.0);
    if let Some(t) = &report.table {
        println!("complexity = {}, bounds = {:?}", t.complexity, t.bound);
    }
    Ok(())
}
