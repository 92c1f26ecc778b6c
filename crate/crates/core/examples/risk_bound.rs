//! Violation-probability bounds for the complexities observed on the cruise
//! control runs, at three confidence levels.

use resilo::scenario::risk_bound;

fn main() -> resilo::Result<()> {
    let betas = [1e-2, 1e-4, 1e-6];
    println!("{:>4} {:>5} {:>10} {:>10} {:>10}", "k", "M", "1e-2", "1e-4", "1e-6");
    for (k, m) in [(4, 10), (8, 100), (9, 500)] {
        let row: Vec<String> = betas
            .iter()
            .map(|&b| risk_bound(k, m, b).map(|v| format!("{v:10.6}")))
            .collect::<resilo::Result<_>>()?;
        println!("{k:>4} {m:>5} {}", row.join(" "));
    }

    // more scenarios buy a smaller bound at fixed complexity
    for m in [50, 100, 200, 500, 1000] {
        println!("k = 8, M = {m:>4}: b = {:.4}", risk_bound(8, m, 1e-2)?);
    }
    Ok(())
}
