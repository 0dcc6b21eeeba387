//! Rank the seven two-component structures by BIC on simulated returns.

use cmgnd::family::{default_family, select_by_bic};
use cmgnd::sim::sample_mixture;
use cmgnd::{FitConfig, GndParams, MixtureModel};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> cmgnd::Result<()> {
    let truth = MixtureModel::unconstrained(
        vec![0.86, 0.14],
        vec![GndParams::new(0.02, 1.35, 1.38)?, GndParams::new(0.02, 1.35, 0.79)?],
    )?;
    let (returns, _) = sample_mixture(&truth, 3786, &mut ChaCha8Rng::seed_from_u64(2));

    let report = select_by_bic(&returns, &default_family(2)?, 2, &FitConfig::default())?;
    print!("{}", report.to_table());
    let best = report.winning_entry();
    println!("selected {} with BIC {:.2}", best.label, best.bic);
    Ok(())
}
