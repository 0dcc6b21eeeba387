//! How often BIC picks each candidate structure when the data come from a
//! known scenario.
//!
//! cargo run --release --example bic_frequencies -- [UCC|UUU|UCU|UUC] [low|medium|high] [n] [reps]

use cmgnd::sim::{bic_selection_experiment, Overlap, ScenarioConfig};

fn main() -> cmgnd::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let truth = args.first().map_or("UCC", String::as_str).parse()?;
    let overlap = match args.get(1).map(String::as_str) {
        Some("medium") => Overlap::Medium,
        Some("high") => Overlap::High,
        _ => Overlap::Low,
    };
    let n = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(400);
    let reps = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(20);

    let sc = ScenarioConfig::new(truth, overlap, n, reps, 7);
    let start = std::time::Instant::now();
    let freq = bic_selection_experiment(&sc, &[])?;
    println!("truth {truth}, {} overlap, n = {n}, {} replications", overlap.name(), freq.succeeded);
    for row in &freq.rows {
        println!("  {:<4} {:>3} wins  {:>5.1}%", row.candidate, row.wins, 100.0 * row.proportion);
    }
    eprintln!("elapsed {:.1?}", start.elapsed());
    Ok(())
}
