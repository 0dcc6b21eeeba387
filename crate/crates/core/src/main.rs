use std::fs::File;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;

use cmgnd::constraints::{ConstraintSpec, ModelCode, ParamKind};
use cmgnd::family::{enumerate_family, select_by_bic, Candidate};
use cmgnd::returns::{density_curve, describe, read_csv_column, ReturnSeries};
use cmgnd::sim::{
    bic_selection_experiment, moment_rmse_experiment, rmse_experiment, sample_mixture, ExperimentOutput,
    ScenarioConfig, FULL_REPS,
};
use cmgnd::{ecm_fit, Error, FitConfig, MixtureModel, Result};

#[derive(Parser)]
#[command(name = "cmgnd", version, about = "Constrained generalized-normal mixtures")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit one constrained mixture.
    Fit {
        data: PathBuf,
        #[arg(long)]
        k: usize,
        /// A code such as CCU, or a JSON constraint file.
        #[arg(long, default_value = "UUU")]
        constraints: String,
        /// One-based components tied by a C letter (default: all).
        #[arg(long, value_delimiter = ',')]
        block: Option<Vec<usize>>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        col: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fit a family of candidates and rank them by BIC.
    Select {
        data: PathBuf,
        #[arg(long)]
        k: usize,
        /// `default`, or a JSON list of codes and/or constraint objects.
        #[arg(long, default_value = "default")]
        family: String,
        #[arg(long, value_delimiter = ',')]
        block: Option<Vec<usize>>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        col: Option<String>,
        /// Where to write the JSON report.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a simulation experiment.
    Simulate {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long, value_enum)]
        experiment: Experiment,
        #[arg(long)]
        reps: Option<usize>,
        /// Use the full replication count.
        #[arg(long, conflicts_with = "reps")]
        full: bool,
        #[arg(long)]
        parallel: bool,
        /// CSV destination (default stdout).
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Draw from a mixture.
    Sample {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Daily percentage log-returns from a price file.
    Returns {
        prices: PathBuf,
        #[arg(long)]
        describe: bool,
        #[arg(long)]
        col: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Mixture density on a uniform grid.
    Density {
        #[arg(long)]
        model: PathBuf,
        /// lo,hi,points
        #[arg(long, value_delimiter = ',', num_args = 1, allow_hyphen_values = true)]
        grid: Vec<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Experiment {
    Rmse,
    Bic,
    Moments,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum FamilyEntry {
    Code(ModelCode),
    Spec(ConstraintSpec),
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => Ok(std::fs::write(p, text)?),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn load_config(path: Option<&Path>) -> Result<FitConfig> {
    path.map_or_else(|| Ok(FitConfig::default()), FitConfig::from_path)
}

fn load_data(path: &Path, col: Option<&str>) -> Result<Vec<f64>> {
    Ok(read_csv_column(File::open(path)?, col)?.values)
}

fn load_model(path: &Path) -> Result<MixtureModel> {
    Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
}

fn zero_based_block(k: usize, block: Option<Vec<usize>>) -> Result<Vec<usize>> {
    match block {
        None => Ok((0..k).collect()),
        Some(b) if b.contains(&0) => Err(Error::Input("block components are numbered from 1".into())),
        Some(b) => Ok(b.into_iter().map(|i| i - 1).collect()),
    }
}

fn parse_constraints(arg: &str, k: usize, block: &[usize]) -> Result<ConstraintSpec> {
    match arg.parse::<ModelCode>() {
        Ok(code) => code.to_spec(k, block),
        Err(_) => Ok(serde_json::from_str(&std::fs::read_to_string(arg)?)?),
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Fit { data, k, constraints, block, config, col, out } => {
            let cfg = load_config(config.as_deref())?;
            let x = load_data(&data, col.as_deref())?;
            let spec = parse_constraints(&constraints, k, &zero_based_block(k, block)?)?;
            let fit = ecm_fit(&x, k, &spec, &cfg)?;
            eprintln!("logL = {}  BIC = {}  p = {}  iterations = {}", fit.log_lik, fit.bic, fit.n_params, fit.iterations);
            emit(out.as_deref(), &(serde_json::to_string_pretty(&fit)? + "\n"))
        }
        Command::Select { data, k, family, block, config, col, out } => {
            let cfg = load_config(config.as_deref())?;
            let x = load_data(&data, col.as_deref())?;
            let candidates: Vec<Candidate> = if family == "default" {
                enumerate_family(k, &ParamKind::ALL, &zero_based_block(k, block)?)?
            } else {
                let entries: Vec<FamilyEntry> = serde_json::from_str(&std::fs::read_to_string(&family)?)?;
                let b = zero_based_block(k, block)?;
                entries
                    .into_iter()
                    .map(|e| match e {
                        FamilyEntry::Code(code) => Ok(Candidate { code: Some(code), spec: code.to_spec(k, &b)? }),
                        FamilyEntry::Spec(spec) => Ok(Candidate::from(spec)),
                    })
                    .collect::<Result<_>>()?
            };
            let report = select_by_bic(&x, &candidates, k, &cfg)?;
            print!("{}", report.to_table());
            if let Some(p) = out {
                std::fs::write(p, serde_json::to_string_pretty(&report)? + "\n")?;
            }
            Ok(())
        }
        Command::Simulate { scenario, experiment, reps, full, parallel, out, json } => {
            let mut sc = ScenarioConfig::from_path(&scenario)?;
            if let Some(r) = reps {
                sc.reps = r;
            }
            if full {
                sc.reps = FULL_REPS;
            }
            sc.parallel |= parallel;
            let result = match experiment {
                Experiment::Rmse => ExperimentOutput::Rmse(rmse_experiment(&sc, &[])?),
                Experiment::Bic => ExperimentOutput::Bic(bic_selection_experiment(&sc, &[])?),
                Experiment::Moments => ExperimentOutput::Moments(moment_rmse_experiment(&sc, &[])?),
            };
            if let Some(p) = json {
                std::fs::write(p, result.to_json()? + "\n")?;
            }
            emit(out.as_deref(), &result.to_csv()?)
        }
        Command::Sample { model, n, seed, out } => {
            let m = load_model(&model)?;
            let (x, labels) = sample_mixture(&m, n, &mut ChaCha8Rng::seed_from_u64(seed));
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(["component", "x"])?;
            for (l, v) in labels.iter().zip(&x) {
                w.write_record([(l + 1).to_string(), v.to_string()])?;
            }
            let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
            emit(out.as_deref(), &String::from_utf8_lossy(&bytes))
        }
        Command::Returns { prices, describe: with_stats, col, out } => {
            let column = read_csv_column(File::open(&prices)?, col.as_deref())?;
            let series = ReturnSeries::from_prices(column.name.clone(), &column.labels, &column.values)?;
            emit(out.as_deref(), &series.to_csv()?)?;
            if with_stats {
                let stats = describe(&series.returns)?;
                eprint!("{}", stats.to_table(&series.ticker));
            }
            Ok(())
        }
        Command::Density { model, grid, out } => {
            let m = load_model(&model)?;
            if grid.len() != 3 {
                return Err(Error::Input("--grid takes lo,hi,points".into()));
            }
            let points = grid[2];
            if points.fract() != 0.0 || points < 0.0 {
                return Err(Error::Input(format!("grid point count must be a whole number, got {points}")));
            }
            let curve = density_curve(&m, grid[0], grid[1], points as usize)?;
            emit(out.as_deref(), &curve.to_csv()?)
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::FitFailure { .. } | Error::Selection(_) | Error::Experiment(_) => 2,
        Error::ParameterDomain(_)
        | Error::Input(_)
        | Error::Stats(_)
        | Error::Config(_)
        | Error::Io(_)
        | Error::Json(_)
        | Error::Csv(_) => 1,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match std::panic::catch_unwind(|| run(cli)) {
        Ok(Ok(())) => ExitCode::SUCCESS,
        Ok(Err(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
        Err(_) => ExitCode::from(3),
    }
}
