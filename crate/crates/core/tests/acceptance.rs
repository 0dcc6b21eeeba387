//! Acceptance suite. Runs every criterion at its stated tolerance, prints one
//! PASS/FAIL line per criterion and exits non-zero if any fails.

use std::time::Instant;

use cmgnd::constraints::{ConstraintSpec, ModelCode, ParamKind};
use cmgnd::ecm::{mu_block_derivatives, normal_em_updates, nu_block_derivatives, q_function, sigma_block_derivatives};
use cmgnd::family::default_family;
use cmgnd::mixture::{e_step, Responsibilities};
use cmgnd::sim::{
    bic_selection_experiment, generate_scenario, rmse_experiment, sample_mixture, ExperimentOutput, Overlap,
    ScenarioConfig, SCENARIO_BLOCK,
};
use cmgnd::{bic, density_mass, ecm_fit, free_parameter_count, marginal_moments, FitConfig, GndParams, MixtureModel};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: impl Into<String>) -> Outcome {
    Outcome { passed, detail: detail.into() }
}

/// Shared state: every fitted density checked by criterion 9.
#[derive(Default)]
struct Suite {
    max_density_error: f64,
    fitted_densities: usize,
    rmse_csv: Option<String>,
}

impl Suite {
    fn record_density(&mut self, m: &MixtureModel) {
        self.max_density_error = self.max_density_error.max((density_mass(m) - 1.0).abs());
        self.fitted_densities += 1;
    }

    fn record_experiment(&mut self, err: f64, fits: usize) {
        self.max_density_error = self.max_density_error.max(err);
        self.fitted_densities += fits;
    }
}

fn bic_arithmetic() -> Outcome {
    let cases = [(-6716.82, 13474.83), (-6755.81, 13552.81), (-6717.75, 13476.70)];
    let mut worst: f64 = 0.0;
    for (ll, expected) in cases {
        worst = worst.max((bic(ll, 5, 3786) - expected).abs());
    }
    outcome(worst <= 0.02, format!("largest |BIC - reference| = {worst:.4}"))
}

fn parameter_counts() -> Outcome {
    let p: Vec<usize> = default_family(2)
        .expect("family")
        .iter()
        .map(|c| free_parameter_count(2, &c.spec).expect("count"))
        .collect();
    outcome(p == [7, 6, 6, 6, 5, 5, 5], format!("p = {p:?}"))
}

fn relative_error(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}

/// Ridders' extrapolation: a tableau of Richardson-extrapolated estimates
/// over shrinking steps, returning the one with the smallest error estimate.
fn ridders(estimate: impl Fn(f64) -> f64, h0: f64, order: i32) -> f64 {
    const SHRINK: f64 = 1.4;
    const LEVELS: usize = 12;
    let shrink2 = SHRINK.powi(order);
    let mut table = vec![vec![0.0; LEVELS]; LEVELS];
    let mut h = h0;
    table[0][0] = estimate(h);
    let mut best = table[0][0];
    let mut best_err = f64::INFINITY;
    for i in 1..LEVELS {
        h /= SHRINK;
        table[0][i] = estimate(h);
        let mut factor = shrink2;
        for j in 1..=i {
            table[j][i] = (table[j - 1][i] * factor - table[j - 1][i - 1]) / (factor - 1.0);
            factor *= shrink2;
            let err = (table[j][i] - table[j - 1][i]).abs().max((table[j][i] - table[j - 1][i - 1]).abs());
            if err <= best_err {
                best_err = err;
                best = table[j][i];
            }
        }
        if (table[i][i] - table[i - 1][i - 1]).abs() >= 2.0 * best_err {
            break;
        }
    }
    best
}

/// First and second derivatives of `f` at `x` from central differences with
/// adaptive step extrapolation, starting from step `h`.
fn finite_differences(f: impl Fn(f64) -> f64, x: f64, h: f64) -> (f64, f64) {
    let f0 = f(x);
    let d1 = ridders(|h| (f(x + h) - f(x - h)) / (2.0 * h), h, 2);
    let d2 = ridders(|h| (f(x + h) - 2.0 * f0 + f(x - h)) / (h * h), h, 2);
    (d1, d2)
}

fn with_block(m: &MixtureModel, block: &[usize], kind: ParamKind, value: f64) -> MixtureModel {
    let mut comps = m.components().to_vec();
    for &k in block {
        match kind {
            ParamKind::Mu => comps[k].mu = value,
            ParamKind::Sigma => comps[k].sigma = value,
            ParamKind::Nu => comps[k].nu = value,
        }
    }
    MixtureModel::new(m.weights().to_vec(), comps, m.constraints().clone()).expect("valid perturbation")
}

fn random_state(rng: &mut ChaCha8Rng) -> MixtureModel {
    let codes = ["UUU", "CUU", "UCU", "UUC", "CCU", "CUC", "UCC", "CCC"];
    let code: ModelCode = codes[rng.random_range(0..codes.len())].parse().expect("code");
    let spec = code.to_spec(3, &SCENARIO_BLOCK).expect("spec");
    let raw: Vec<f64> = (0..3).map(|_| rng.random_range(0.2..1.0)).collect();
    let total: f64 = raw.iter().sum();
    let weights: Vec<f64> = raw.iter().map(|w| w / total).collect();
    let mut comps: Vec<GndParams> = (0..3)
        .map(|_| GndParams::new(rng.random_range(0.0..20.0), rng.random_range(0.2..3.0), rng.random_range(0.5..4.0)).expect("gnd"))
        .collect();
    for kind in ParamKind::ALL {
        for block in spec.blocks(kind) {
            let lead = comps[block[0]];
            for &k in block {
                match kind {
                    ParamKind::Mu => comps[k].mu = lead.mu,
                    ParamKind::Sigma => comps[k].sigma = lead.sigma,
                    ParamKind::Nu => comps[k].nu = lead.nu,
                }
            }
        }
    }
    MixtureModel::new(weights, comps, spec).expect("random state")
}

fn gradient_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(20_240_601);
    let mut worst: f64 = 0.0;
    let mut worst_at = String::new();
    let mut checks = 0;
    for state in 0..20 {
        let m = random_state(&mut rng);
        let (data, _) = sample_mixture(&m, 300, &mut rng);
        let z: Responsibilities = e_step(&data, &m).expect("e-step").responsibilities;
        let comps = m.components();
        for kind in ParamKind::ALL {
            for block in m.constraints().blocks(kind) {
                let lead = comps[block[0]];
                let (coded, at, h) = match kind {
                    ParamKind::Mu => {
                        let gap = data.iter().map(|x| (x - lead.mu).abs()).fold(f64::INFINITY, f64::min);
                        (mu_block_derivatives(block, &data, &z, comps), lead.mu, (0.1 * lead.sigma).min(0.5 * gap))
                    }
                    ParamKind::Sigma => (sigma_block_derivatives(block, &data, &z, comps), lead.sigma, 0.1 * lead.sigma),
                    ParamKind::Nu => (nu_block_derivatives(block, &data, &z, comps), lead.nu, 0.1 * lead.nu),
                };
                let q = |v: f64| q_function(&data, &z, &with_block(&m, block, kind, v));
                let (g, gp) = finite_differences(q, at, h);
                for (name, a, b) in [("gradient", coded.gradient, g), ("curvature", coded.curvature, gp)] {
                    let e = relative_error(a, b);
                    checks += 1;
                    if e > worst {
                        worst = e;
                        worst_at = format!("state {state}, {} block {:?} {name}: coded {a:.9e} vs {b:.9e}", kind.name(), block);
                    }
                }
            }
        }
    }
    outcome(worst < 1e-4, format!("{checks} checks, worst relative error {worst:.2e} ({worst_at})"))
}

fn monotone_likelihood(suite: &mut Suite) -> Outcome {
    let truths = ["UUU", "UCU", "UUC", "UCC"];
    let overlaps = [Overlap::Low, Overlap::Medium, Overlap::High];
    let specs = ["UUU", "UCU", "UUC", "UCC"];
    let mut steps = 0usize;
    let mut good = 0usize;
    let mut violations = Vec::new();
    for i in 0..50usize {
        let combo = i % 48;
        let truth: ModelCode = truths[combo / 12].parse().expect("code");
        let overlap = overlaps[(combo / 4) % 3];
        let spec: ModelCode = specs[combo % 4].parse().expect("code");
        let sc = ScenarioConfig::new(truth, overlap, 400, 1, 1_000 + i as u64);
        let data = generate_scenario(&sc, 0).expect("data");
        let cfg = FitConfig { seed: i as u64, ..FitConfig::default() };
        let fit = ecm_fit(&data, 3, &spec.to_spec(3, &SCENARIO_BLOCK).expect("spec"), &cfg).expect("fit");
        suite.record_density(&fit.model);
        for (it, w) in fit.loglik_trace.windows(2).enumerate() {
            steps += 1;
            let delta = w[1] - w[0];
            if delta >= -1e-8 {
                good += 1;
            } else {
                violations.push(format!("fit {i} ({truth}/{}/{spec}) iteration {}: delta {delta:.3e}", overlap.name(), it + 1));
            }
        }
    }
    for v in &violations {
        println!("    monotonicity violation: {v}");
    }
    let share = good as f64 / steps as f64;
    outcome(share >= 0.99, format!("{good}/{steps} iterations non-decreasing ({:.3}%), {} violations", 100.0 * share, violations.len()))
}

fn constraint_benefit(suite: &mut Suite) -> Outcome {
    let ucu: ModelCode = "UCU".parse().expect("code");
    let sc = ScenarioConfig::new(ucu, Overlap::Low, 1000, 50, 5);
    let table = rmse_experiment(&sc, &[ucu, ModelCode::UUU]).expect("experiment");
    let fits: usize = table.tallies.iter().map(|t| t.succeeded).sum();
    suite.record_experiment(table.max_density_error, fits);
    let constrained = table.get("UCU", "sigma2").expect("row");
    let free = table.get("UUU", "sigma2").expect("row");
    suite.rmse_csv = Some(ExperimentOutput::Rmse(table).to_csv().expect("csv"));
    let ratio = constrained / free;
    outcome(
        ratio <= 0.6,
        format!("RMSE(sigma2): constrained {constrained:.4}, unconstrained {free:.4}, ratio {ratio:.3}"),
    )
}

fn bic_selection(suite: &mut Suite) -> Outcome {
    let tied = ScenarioConfig::new("UCC".parse().expect("code"), Overlap::Low, 400, 50, 6);
    let a = bic_selection_experiment(&tied, &[]).expect("experiment");
    suite.record_experiment(a.max_density_error, 4 * a.succeeded);
    let free = ScenarioConfig::new(ModelCode::UUU, Overlap::High, 400, 50, 6);
    let b = bic_selection_experiment(&free, &[]).expect("experiment");
    suite.record_experiment(b.max_density_error, 4 * b.succeeded);
    let tied_share = a.proportion("UCC").expect("row");
    let free_share = b.proportion("UUU").expect("row");
    outcome(
        tied_share >= 0.8 && free_share < 0.5,
        format!(
            "tied truth, low overlap: tied model chosen {:.0}%; free truth, high overlap: free model chosen {:.0}%",
            100.0 * tied_share,
            100.0 * free_share
        ),
    )
}

fn moment_machinery() -> Outcome {
    let m = ScenarioConfig::new(ModelCode::UUU, Overlap::Low, 100, 2, 0).true_model().expect("model");
    let analytic = marginal_moments(&m);
    let (x, _) = sample_mixture(&m, 10_000_000, &mut ChaCha8Rng::seed_from_u64(77));
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
    for v in &x {
        let d = v - mean;
        m2 += d * d;
        m3 += d * d * d;
        m4 += d * d * d * d;
    }
    let (m2, m3, m4) = (m2 / n, m3 / n, m4 / n);
    let empirical = [mean, m2, m3 / m2.powf(1.5), m4 / (m2 * m2)];
    let exact = [analytic.mean, analytic.variance, analytic.skewness, analytic.kurtosis];
    let errs: Vec<f64> = exact.iter().zip(&empirical).map(|(a, e)| (a - e).abs() / a.abs()).collect();
    let passed = errs[..3].iter().all(|&e| e <= 0.01) && errs[3] <= 0.03;
    outcome(
        passed,
        format!(
            "relative errors mean {:.2e}, variance {:.2e}, skewness {:.2e}, kurtosis {:.2e}",
            errs[0], errs[1], errs[2], errs[3]
        ),
    )
}

fn nesting(suite: &mut Suite) -> Outcome {
    let truth = MixtureModel::unconstrained(
        vec![0.5, 0.3, 0.2],
        vec![
            GndParams::new(-4.0, 1.0, 2.0).expect("gnd"),
            GndParams::new(1.0, 1.5, 2.0).expect("gnd"),
            GndParams::new(6.0, 0.8, 2.0).expect("gnd"),
        ],
    )
    .expect("model");
    let (data, _) = sample_mixture(&truth, 2000, &mut ChaCha8Rng::seed_from_u64(8));
    let cfg = FitConfig { fixed_nu: Some(2.0), loglik_rel_tol: 1e-300, max_iters: 2000, ..FitConfig::default() };
    let fit = ecm_fit(&data, 3, &ConstraintSpec::unconstrained(3), &cfg).expect("fit");
    suite.record_density(&fit.model);
    let (weights, means) = normal_em_updates(&data, &fit.responsibilities);
    let mut worst: f64 = 0.0;
    for k in 0..3 {
        worst = worst.max((weights[k] - fit.model.weights()[k]).abs());
        worst = worst.max((means[k] - fit.model.components()[k].mu).abs());
    }
    outcome(
        worst <= 1e-8,
        format!(
            "largest weight/mean gap to normal-mixture EM {worst:.2e} after {} iterations (stationary: {})",
            fit.iterations, fit.converged
        ),
    )
}

fn density_normalization(suite: &Suite) -> Outcome {
    outcome(
        suite.max_density_error <= 1e-4,
        format!("{} fitted densities, largest |integral - 1| = {:.2e}", suite.fitted_densities, suite.max_density_error),
    )
}

fn determinism(suite: &Suite) -> Outcome {
    let ucu: ModelCode = "UCU".parse().expect("code");
    let mut sc = ScenarioConfig::new(ucu, Overlap::Low, 1000, 50, 5);
    sc.parallel = true;
    let pool = rayon::ThreadPoolBuilder::new().num_threads(4).build().expect("pool");
    let table = pool.install(|| rmse_experiment(&sc, &[ucu, ModelCode::UUU])).expect("experiment");
    let parallel_csv = ExperimentOutput::Rmse(table).to_csv().expect("csv");
    let identical = suite.rmse_csv.as_deref() == Some(parallel_csv.as_str());
    outcome(identical, format!("sequential and 4-thread CSVs identical: {identical} ({} bytes)", parallel_csv.len()))
}

fn main() {
    let mut suite = Suite::default();
    let mut failures = 0;
    let mut report = |id: usize, name: &str, run: &mut dyn FnMut(&mut Suite) -> Outcome| {
        let start = Instant::now();
        let o = run(&mut suite);
        let status = if o.passed { "PASS" } else { "FAIL" };
        println!("criterion {id:>2} [{status}] {name}: {} ({:.1?})", o.detail, start.elapsed());
        if !o.passed {
            failures += 1;
        }
    };
    report(1, "BIC arithmetic", &mut |_| bic_arithmetic());
    report(2, "parameter counts", &mut |_| parameter_counts());
    report(3, "Q-function derivatives", &mut |_| gradient_oracle());
    report(4, "monotone likelihood", &mut monotone_likelihood);
    report(5, "constraint benefit", &mut constraint_benefit);
    report(6, "BIC selection", &mut bic_selection);
    report(7, "marginal moments", &mut |_| moment_machinery());
    report(8, "normal nesting", &mut nesting);
    report(9, "density normalization", &mut |s| density_normalization(s));
    report(10, "determinism", &mut |s| determinism(s));
    if failures > 0 {
        println!("{failures} acceptance criteria failed");
        std::process::exit(1);
    }
    println!("all acceptance criteria passed");
}
