//! Error in the fitted marginal moments (mean, variance, skewness,
//! kurtosis) for each candidate and for the BIC choice.
//!
//! cargo run --release --example moment_rmse -- [reps]

use cmgnd::mixture::marginal_moments;
use cmgnd::sim::{moment_rmse_experiment, Overlap, ScenarioConfig, MOMENT_NAMES};

fn main() -> cmgnd::Result<()> {
    let reps = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(10);
    let sc = ScenarioConfig::new("UCU".parse()?, Overlap::High, 1000, reps, 3);
    let truth = marginal_moments(&sc.true_model()?);
    println!(
        "true moments: mean {:.4}, variance {:.4}, skewness {:.4}, kurtosis {:.4}",
        truth.mean, truth.variance, truth.skewness, truth.kurtosis
    );

    let table = moment_rmse_experiment(&sc, &[])?;
    print!("{:<6}", "spec");
    MOMENT_NAMES.iter().for_each(|m| print!(" {m:>10}"));
    println!();
    for t in &table.tallies {
        print!("{:<6}", t.spec);
        for m in MOMENT_NAMES {
            print!(" {:>10.4}", table.get(&t.spec, m).unwrap_or(f64::NAN));
        }
        println!();
    }
    Ok(())
}
