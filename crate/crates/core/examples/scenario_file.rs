//! Drive an experiment from a TOML scenario and write CSV and JSON outputs,
//! as the `simulate` subcommand does.

use cmgnd::sim::{bic_selection_experiment, ExperimentOutput, ScenarioConfig};

const SCENARIO: &str = r#"
true_spec = "UUC"
overlap = "medium"
n = 400
reps = 6
seed = 99
parallel = true

[fit]
n_starts = 3
"#;

fn main() -> cmgnd::Result<()> {
    let dir = std::env::temp_dir().join("cmgnd-scenario-example");
    std::fs::create_dir_all(&dir)?;
    let path = dir.join("scenario.toml");
    std::fs::write(&path, SCENARIO)?;

    let sc = ScenarioConfig::from_path(&path)?;
    let out = ExperimentOutput::Bic(bic_selection_experiment(&sc, &[])?);
    std::fs::write(dir.join("bic.csv"), out.to_csv()?)?;
    std::fs::write(dir.join("bic.json"), out.to_json()?)?;
    print!("{}", out.to_csv()?);
    println!("outputs written to {}", dir.display());
    Ok(())
}
