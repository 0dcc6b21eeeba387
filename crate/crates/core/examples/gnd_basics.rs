//! Density, sampling and moments of a single generalized normal law across
//! a range of shapes.

use cmgnd::gnd::{gnd_abs_central_moment, gnd_pdf, gnd_sample};
use cmgnd::GndParams;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> cmgnd::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    println!("{:>5} {:>10} {:>10} {:>12} {:>12}", "shape", "f(mu)", "f(mu+2)", "kurtosis", "sample kurt");
    for nu in [0.5, 1.0, 1.6, 2.0, 4.0, 10.0] {
        let p = GndParams::new(0.0, 1.0, nu)?;
        let kurt = gnd_abs_central_moment(&p, 4)? / gnd_abs_central_moment(&p, 2)?.powi(2);
        let x = gnd_sample(&p, 200_000, &mut rng)?;
        let m2 = x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64;
        let m4 = x.iter().map(|v| v.powi(4)).sum::<f64>() / x.len() as f64;
        println!(
            "{nu:>5.1} {:>10.5} {:>10.5} {kurt:>12.4} {:>12.4}",
            gnd_pdf(0.0, &p)?,
            gnd_pdf(2.0, &p)?,
            m4 / (m2 * m2)
        );
    }
    Ok(())
}
