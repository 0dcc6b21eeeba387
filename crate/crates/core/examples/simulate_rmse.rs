//! Parameter-recovery experiment: data from a three-component scenario with a
//! shared scale, fitted with and without that constraint.
//!
//! cargo run --release --example simulate_rmse -- [reps] [n]

use cmgnd::sim::{rmse_experiment, Overlap, ScenarioConfig};
use cmgnd::ModelCode;

fn main() -> cmgnd::Result<()> {
    let mut args = std::env::args().skip(1);
    let reps = args.next().and_then(|s| s.parse().ok()).unwrap_or(10);
    let n = args.next().and_then(|s| s.parse().ok()).unwrap_or(1000);

    let ucu: ModelCode = "UCU".parse()?;
    let sc = ScenarioConfig::new(ucu, Overlap::Low, n, reps, 2024);
    let start = std::time::Instant::now();
    let table = rmse_experiment(&sc, &[ucu, ModelCode::UUU])?;

    println!("{:<10} {:>8} {:>10} {:>10}", "parameter", "truth", "UCU", "UUU");
    for row in table.rows.iter().filter(|r| r.spec == "UCU") {
        let free = table.get("UUU", &row.parameter).unwrap_or(f64::NAN);
        println!("{:<10} {:>8.3} {:>10.4} {:>10.4}", row.parameter, row.truth, row.rmse, free);
    }
    for t in &table.tallies {
        println!("{}: {} fits, {} failed", t.spec, t.succeeded, t.failed);
    }
    println!("largest density-normalization error: {:.2e}", table.max_density_error);
    eprintln!("elapsed {:.1?}", start.elapsed());
    Ok(())
}
