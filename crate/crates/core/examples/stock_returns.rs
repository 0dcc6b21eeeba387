//! From a price file to a fitted return density.
//!
//! cargo run --release --example stock_returns -- prices.csv [column]
//!
//! Without arguments a synthetic heavy-tailed price path is used. Prints the
//! descriptive statistics, the BIC ranking and a coarse density table.

use std::fs::File;

use cmgnd::family::{default_family, select_by_bic};
use cmgnd::returns::{compute_returns, density_curve, describe, read_csv_column};
use cmgnd::sim::sample_mixture;
use cmgnd::{FitConfig, GndParams, MixtureModel};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn synthetic_prices() -> cmgnd::Result<Vec<f64>> {
    let law = MixtureModel::unconstrained(
        vec![0.8, 0.2],
        vec![GndParams::new(0.03, 1.1, 1.5)?, GndParams::new(0.03, 1.1, 0.7)?],
    )?;
    let (r, _) = sample_mixture(&law, 2500, &mut ChaCha8Rng::seed_from_u64(17));
    let mut p = vec![100.0];
    for x in r {
        p.push(p[p.len() - 1] * (x / 100.0).exp());
    }
    Ok(p)
}

fn main() -> cmgnd::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let (name, prices) = match args.first() {
        Some(path) => {
            let col = read_csv_column(File::open(path)?, args.get(1).map(String::as_str))?;
            (col.name, col.values)
        }
        None => ("synthetic".to_string(), synthetic_prices()?),
    };
    let returns = compute_returns(&prices)?;
    print!("{}", describe(&returns)?.to_table(&name));

    let report = select_by_bic(&returns, &default_family(2)?, 2, &FitConfig::default())?;
    println!();
    print!("{}", report.to_table());

    let model = &report.winning_entry().fit.as_ref().expect("winner has a fit").model;
    let curve = density_curve(model, -6.0, 6.0, 13)?;
    println!("\n{:>6} {:>10}", "x", "density");
    for (x, d) in curve.x.iter().zip(&curve.density) {
        println!("{x:>6.1} {d:>10.5}");
    }
    Ok(())
}
