//! Monte Carlo experiments on three-component scenarios: parameter RMSE,
//! BIC selection frequencies and marginal-moment RMSE.
//!
//! Replication `r` draws its data from a generator seeded by a hash of
//! `(seed, r)`, so results do not depend on how replications are scheduled.
//! Per-replication results are reduced in replication order.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::constraints::{ModelCode, ParamKind};
use crate::ecm::{ecm_fit, FitConfig, FitResult};
use crate::error::{Error, Result};
use crate::family::{enumerate_family, select_by_bic, Candidate};
use crate::gnd::{GndParams, GndSampler};
use crate::mixture::{density_mass, marginal_moments, MarginalMoments, MixtureModel};

/// Components tied by a `C` letter in the three-component scenarios (the
/// second and third).
pub const SCENARIO_BLOCK: [usize; 2] = [1, 2];
const SCENARIO_WEIGHTS: [f64; 3] = [0.4, 0.3, 0.3];
pub const DEFAULT_REPS: usize = 50;
pub const FULL_REPS: usize = 250;

/// Spacing of the component means.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Overlap {
    Low,
    Medium,
    High,
}

impl Overlap {
    pub fn means(self) -> [f64; 3] {
        match self {
            Overlap::Low => [0.0, 10.0, 20.0],
            Overlap::Medium => [0.0, 7.0, 14.0],
            Overlap::High => [0.0, 5.0, 10.0],
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Overlap::Low => "low",
            Overlap::Medium => "medium",
            Overlap::High => "high",
        }
    }
}

/// How fitted components are paired with the true ones before errors are
/// measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LabelMatching {
    /// Minimize the summed squared differences of the means.
    #[default]
    Means,
    /// Minimize the summed squared differences of mean, log scale and shape.
    Parameters,
}

fn default_reps() -> usize {
    DEFAULT_REPS
}

/// One simulation scenario and the settings used to fit it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    /// Generating structure; only the scale and shape letters may be `C`.
    pub true_spec: ModelCode,
    pub overlap: Overlap,
    pub n: usize,
    #[serde(default = "default_reps")]
    pub reps: usize,
    #[serde(default)]
    pub seed: u64,
    /// Models fitted in each replication; defaults depend on the experiment.
    #[serde(default)]
    pub candidates: Option<Vec<ModelCode>>,
    #[serde(default)]
    pub fit: FitConfig,
    /// Run replications on the rayon pool.
    #[serde(default)]
    pub parallel: bool,
    #[serde(default)]
    pub label_matching: LabelMatching,
}

impl ScenarioConfig {
    pub fn new(true_spec: ModelCode, overlap: Overlap, n: usize, reps: usize, seed: u64) -> Self {
        Self {
            true_spec,
            overlap,
            n,
            reps,
            seed,
            candidates: None,
            fit: FitConfig::default(),
            parallel: false,
            label_matching: LabelMatching::Means,
        }
    }

    /// Reads a scenario file: TOML when the extension is `.toml`, JSON otherwise.
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let sc: ScenarioConfig = if path.extension().is_some_and(|e| e == "toml") {
            toml::from_str(&text).map_err(|e| Error::Config(e.to_string()))?
        } else {
            serde_json::from_str(&text)?
        };
        sc.validate()?;
        Ok(sc)
    }

    pub fn validate(&self) -> Result<()> {
        if self.true_spec.mu {
            return Err(Error::Config("scenarios keep the component means distinct; true_spec must start with U".into()));
        }
        if self.n <= 12 {
            return Err(Error::Config(format!("n = {} is too small for three components", self.n)));
        }
        self.fit.validate()
    }

    /// Generating model: weights (0.4, 0.3, 0.3), means by overlap, and
    /// scales/shapes (0.2, 1.5, 3)/(0.5, 1.6, 4) with the tied versions
    /// (0.2, 3, 3)/(0.5, 1.6, 1.6).
    pub fn true_model(&self) -> Result<MixtureModel> {
        self.validate()?;
        let mu = self.overlap.means();
        let sigma = if self.true_spec.sigma { [0.2, 3.0, 3.0] } else { [0.2, 1.5, 3.0] };
        let nu = if self.true_spec.nu { [0.5, 1.6, 1.6] } else { [0.5, 1.6, 4.0] };
        let comps = (0..3).map(|k| GndParams::new(mu[k], sigma[k], nu[k])).collect::<Result<Vec<_>>>()?;
        MixtureModel::new(SCENARIO_WEIGHTS.to_vec(), comps, self.true_spec.to_spec(3, &SCENARIO_BLOCK)?)
    }

    pub fn label(&self) -> String {
        format!("{}-{}-n{}", self.true_spec, self.overlap.name(), self.n)
    }

    fn candidate_codes(&self, default: &[ModelCode]) -> Vec<ModelCode> {
        self.candidates.clone().unwrap_or_else(|| default.to_vec())
    }
}

fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Data seed of replication `rep`.
pub fn rep_seed(seed: u64, rep: usize) -> u64 {
    splitmix64(splitmix64(seed) ^ rep as u64)
}

/// `n` draws from `m` with the component label of each draw.
pub fn sample_mixture<R: Rng + ?Sized>(m: &MixtureModel, n: usize, rng: &mut R) -> (Vec<f64>, Vec<usize>) {
    let samplers: Vec<GndSampler> =
        m.components().iter().map(|c| GndSampler::new(c).expect("validated model")).collect();
    let mut cumulative: Vec<f64> = m
        .weights()
        .iter()
        .scan(0.0, |acc, w| {
            *acc += w;
            Some(*acc)
        })
        .collect();
    *cumulative.last_mut().expect("K >= 1") = f64::INFINITY;
    let mut values = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let u: f64 = rng.random();
        let k = cumulative.iter().position(|&c| u < c).expect("last bound is infinite");
        values.push(samplers[k].draw(rng));
        labels.push(k);
    }
    (values, labels)
}

/// Replication `rep` of the scenario, with component labels.
pub fn generate_labelled(sc: &ScenarioConfig, rep: usize) -> Result<(Vec<f64>, Vec<usize>)> {
    let m = sc.true_model()?;
    let mut rng = ChaCha8Rng::seed_from_u64(rep_seed(sc.seed, rep));
    Ok(sample_mixture(&m, sc.n, &mut rng))
}

/// Replication `rep` of the scenario.
pub fn generate_scenario(sc: &ScenarioConfig, rep: usize) -> Result<Vec<f64>> {
    Ok(generate_labelled(sc, rep)?.0)
}

fn permutations(k: usize) -> Vec<Vec<usize>> {
    if k == 0 {
        return vec![Vec::new()];
    }
    let mut out = Vec::new();
    for p in permutations(k - 1) {
        for slot in 0..=p.len() {
            let mut q = p.clone();
            q.insert(slot, k - 1);
            out.push(q);
        }
    }
    out.sort();
    out
}

/// Permutation `perm` with fitted component `perm[k]` paired to true
/// component `k`, found by exhaustive search. Ties keep the
/// lexicographically first permutation, so the identity wins when possible.
pub fn match_labels(fitted: &MixtureModel, truth: &MixtureModel, strategy: LabelMatching) -> Result<Vec<usize>> {
    if fitted.k() != truth.k() {
        return Err(Error::Input(format!("cannot match K = {} against K = {}", fitted.k(), truth.k())));
    }
    let (f, t) = (fitted.components(), truth.components());
    let cost = |perm: &[usize]| -> f64 {
        perm.iter()
            .enumerate()
            .map(|(k, &j)| match strategy {
                LabelMatching::Means => (f[j].mu - t[k].mu).powi(2),
                LabelMatching::Parameters => {
                    (f[j].mu - t[k].mu).powi(2) + (f[j].sigma / t[k].sigma).ln().powi(2) + (f[j].nu - t[k].nu).powi(2)
                }
            })
            .sum()
    };
    let mut best = (f64::INFINITY, Vec::new());
    for perm in permutations(fitted.k()) {
        let c = cost(&perm);
        if c < best.0 {
            best = (c, perm);
        }
    }
    Ok(best.1)
}

/// Names of the per-component parameters in table order.
pub fn parameter_names(k: usize) -> Vec<String> {
    let mut names: Vec<String> = (1..=k).map(|j| format!("pi{j}")).collect();
    for kind in ParamKind::ALL {
        names.extend((1..=k).map(|j| format!("{}{j}", kind.name())));
    }
    names
}

fn parameter_vector(m: &MixtureModel) -> Vec<f64> {
    let mut v = m.weights().to_vec();
    v.extend(m.components().iter().map(|c| c.mu));
    v.extend(m.components().iter().map(|c| c.sigma));
    v.extend(m.components().iter().map(|c| c.nu));
    v
}

/// Per-parameter RMSE of label-aligned estimates against `truth`, in the
/// order of [`parameter_names`].
pub fn rmse_from_estimates(truth: &MixtureModel, estimates: &[MixtureModel]) -> Result<Vec<f64>> {
    if estimates.is_empty() {
        return Err(Error::Experiment("no estimates".into()));
    }
    let target = parameter_vector(truth);
    let mut sq = vec![0.0; target.len()];
    for est in estimates {
        if est.k() != truth.k() {
            return Err(Error::Experiment("estimate has the wrong number of components".into()));
        }
        for (acc, (e, t)) in sq.iter_mut().zip(parameter_vector(est).iter().zip(&target)) {
            *acc += (e - t).powi(2);
        }
    }
    Ok(sq.into_iter().map(|s| (s / estimates.len() as f64).sqrt()).collect())
}

/// Scenario identification repeated on every output row.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScenarioSummary {
    pub true_spec: String,
    pub overlap: Overlap,
    pub n: usize,
    pub reps: usize,
    pub seed: u64,
}

impl From<&ScenarioConfig> for ScenarioSummary {
    fn from(sc: &ScenarioConfig) -> Self {
        Self { true_spec: sc.true_spec.to_string(), overlap: sc.overlap, n: sc.n, reps: sc.reps, seed: sc.seed }
    }
}

/// Successful and failed replications for one fitted structure.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitTally {
    pub spec: String,
    pub succeeded: usize,
    pub failed: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RmseRow {
    pub spec: String,
    pub parameter: String,
    pub truth: f64,
    pub rmse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RmseTable {
    pub scenario: ScenarioSummary,
    pub rows: Vec<RmseRow>,
    pub tallies: Vec<FitTally>,
    /// Largest `|integral - 1|` over every fitted density.
    pub max_density_error: f64,
}

impl RmseTable {
    pub fn get(&self, spec: &str, parameter: &str) -> Option<f64> {
        self.rows.iter().find(|r| r.spec == spec && r.parameter == parameter).map(|r| r.rmse)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FrequencyRow {
    pub candidate: String,
    pub wins: usize,
    /// Share of the successful replications.
    pub proportion: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SelectionFrequencies {
    pub scenario: ScenarioSummary,
    pub rows: Vec<FrequencyRow>,
    pub succeeded: usize,
    pub failed: usize,
    pub max_density_error: f64,
}

impl SelectionFrequencies {
    pub fn proportion(&self, candidate: &str) -> Option<f64> {
        self.rows.iter().find(|r| r.candidate == candidate).map(|r| r.proportion)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MomentRow {
    /// A candidate code, or `BIC` for the per-replication winner.
    pub spec: String,
    pub moment: String,
    pub truth: f64,
    pub rmse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MomentRmseTable {
    pub scenario: ScenarioSummary,
    pub rows: Vec<MomentRow>,
    pub tallies: Vec<FitTally>,
    pub max_density_error: f64,
}

impl MomentRmseTable {
    pub fn get(&self, spec: &str, moment: &str) -> Option<f64> {
        self.rows.iter().find(|r| r.spec == spec && r.moment == moment).map(|r| r.rmse)
    }
}

/// Output of any of the three experiments.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "experiment", rename_all = "lowercase")]
pub enum ExperimentOutput {
    Rmse(RmseTable),
    Bic(SelectionFrequencies),
    Moments(MomentRmseTable),
}

fn write_csv(header: &[&str], rows: impl Iterator<Item = Vec<String>>) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for row in rows {
        w.write_record(&row)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    String::from_utf8(bytes).map_err(|e| Error::Experiment(e.to_string()))
}

fn scenario_cells(s: &ScenarioSummary) -> Vec<String> {
    vec![s.true_spec.clone(), s.overlap.name().into(), s.n.to_string(), s.reps.to_string()]
}

impl ExperimentOutput {
    /// CSV with one row per parameter or moment per spec; floats are written
    /// in shortest round-trip form.
    pub fn to_csv(&self) -> Result<String> {
        match self {
            ExperimentOutput::Rmse(t) => write_csv(
                &["true_spec", "overlap", "n", "reps", "spec", "parameter", "truth", "rmse", "succeeded", "failed"],
                t.rows.iter().map(|r| {
                    let tally = t.tallies.iter().find(|x| x.spec == r.spec).expect("every row has a tally");
                    let mut cells = scenario_cells(&t.scenario);
                    cells.extend([
                        r.spec.clone(),
                        r.parameter.clone(),
                        r.truth.to_string(),
                        r.rmse.to_string(),
                        tally.succeeded.to_string(),
                        tally.failed.to_string(),
                    ]);
                    cells
                }),
            ),
            ExperimentOutput::Bic(t) => write_csv(
                &["true_spec", "overlap", "n", "reps", "candidate", "wins", "proportion", "succeeded", "failed"],
                t.rows.iter().map(|r| {
                    let mut cells = scenario_cells(&t.scenario);
                    cells.extend([
                        r.candidate.clone(),
                        r.wins.to_string(),
                        r.proportion.to_string(),
                        t.succeeded.to_string(),
                        t.failed.to_string(),
                    ]);
                    cells
                }),
            ),
            ExperimentOutput::Moments(t) => write_csv(
                &["true_spec", "overlap", "n", "reps", "spec", "moment", "truth", "rmse", "succeeded", "failed"],
                t.rows.iter().map(|r| {
                    let tally = t.tallies.iter().find(|x| x.spec == r.spec).expect("every row has a tally");
                    let mut cells = scenario_cells(&t.scenario);
                    cells.extend([
                        r.spec.clone(),
                        r.moment.clone(),
                        r.truth.to_string(),
                        r.rmse.to_string(),
                        tally.succeeded.to_string(),
                        tally.failed.to_string(),
                    ]);
                    cells
                }),
            ),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn max_density_error(&self) -> f64 {
        match self {
            ExperimentOutput::Rmse(t) => t.max_density_error,
            ExperimentOutput::Bic(t) => t.max_density_error,
            ExperimentOutput::Moments(t) => t.max_density_error,
        }
    }
}

fn check_reps(sc: &ScenarioConfig) -> Result<()> {
    sc.validate()?;
    if sc.reps < 2 {
        return Err(Error::Experiment(format!("need at least 2 replications, got {}", sc.reps)));
    }
    Ok(())
}

/// Runs `f` for every replication, in parallel when asked, and returns the
/// results in replication order.
fn for_each_rep<T: Send>(sc: &ScenarioConfig, f: impl Fn(usize) -> T + Sync + Send) -> Vec<T> {
    if sc.parallel {
        (0..sc.reps).into_par_iter().map(f).collect()
    } else {
        (0..sc.reps).map(f).collect()
    }
}

/// Fit settings for replication `rep`: every candidate shares them.
fn rep_fit_config(sc: &ScenarioConfig, rep: usize) -> FitConfig {
    FitConfig { seed: splitmix64(rep_seed(sc.seed, rep) ^ sc.fit.seed), ..sc.fit.clone() }
}

fn check_failures(spec: &str, failed: usize, reps: usize) -> Result<()> {
    if 2 * failed > reps {
        return Err(Error::Experiment(format!("{spec}: {failed} of {reps} replications failed")));
    }
    Ok(())
}

fn dedup_codes(codes: Vec<ModelCode>) -> Vec<ModelCode> {
    let mut out: Vec<ModelCode> = Vec::new();
    for c in codes {
        if !out.contains(&c) {
            out.push(c);
        }
    }
    out
}

fn density_error(fit: &FitResult) -> f64 {
    (density_mass(&fit.model) - 1.0).abs()
}

/// Fits each of `fit_specs` (default: the true structure and `UUU`) to every
/// replication and reports label-aligned RMSE per parameter.
pub fn rmse_experiment(sc: &ScenarioConfig, fit_specs: &[ModelCode]) -> Result<RmseTable> {
    check_reps(sc)?;
    let truth = sc.true_model()?;
    let codes = dedup_codes(if fit_specs.is_empty() {
        sc.candidate_codes(&[sc.true_spec, ModelCode::UUU])
    } else {
        fit_specs.to_vec()
    });
    let specs = codes.iter().map(|c| c.to_spec(3, &SCENARIO_BLOCK)).collect::<Result<Vec<_>>>()?;

    let per_rep: Vec<Result<Vec<Option<(MixtureModel, f64)>>>> = for_each_rep(sc, |rep| {
        let data = generate_scenario(sc, rep)?;
        let cfg = rep_fit_config(sc, rep);
        specs
            .iter()
            .map(|spec| match ecm_fit(&data, 3, spec, &cfg) {
                Ok(fit) => {
                    let perm = match_labels(&fit.model, &truth, sc.label_matching)?;
                    Ok(Some((fit.model.permuted(&perm)?, density_error(&fit))))
                }
                Err(Error::FitFailure { .. }) => Ok(None),
                Err(e) => Err(e),
            })
            .collect()
    });

    let names = parameter_names(3);
    let target = parameter_vector(&truth);
    let mut rows = Vec::new();
    let mut tallies = Vec::new();
    let mut max_density_error: f64 = 0.0;
    let per_rep = per_rep.into_iter().collect::<Result<Vec<_>>>()?;
    for (s, code) in codes.iter().enumerate() {
        let mut estimates = Vec::new();
        for rep in &per_rep {
            if let Some((m, err)) = &rep[s] {
                estimates.push(m.clone());
                max_density_error = max_density_error.max(*err);
            }
        }
        let failed = sc.reps - estimates.len();
        check_failures(&code.to_string(), failed, sc.reps)?;
        let rmse = rmse_from_estimates(&truth, &estimates)?;
        for ((name, t), r) in names.iter().zip(&target).zip(rmse) {
            rows.push(RmseRow { spec: code.to_string(), parameter: name.clone(), truth: *t, rmse: r });
        }
        tallies.push(FitTally { spec: code.to_string(), succeeded: estimates.len(), failed });
    }
    Ok(RmseTable { scenario: sc.into(), rows, tallies, max_density_error })
}

fn scenario_candidates(sc: &ScenarioConfig, candidates: &[ModelCode]) -> Result<Vec<Candidate>> {
    if !candidates.is_empty() || sc.candidates.is_some() {
        let codes = dedup_codes(if candidates.is_empty() { sc.candidate_codes(&[]) } else { candidates.to_vec() });
        if codes.is_empty() {
            return Err(Error::Experiment("no candidate models".into()));
        }
        return codes
            .into_iter()
            .map(|code| Ok(Candidate { code: Some(code), spec: code.to_spec(3, &SCENARIO_BLOCK)? }))
            .collect();
    }
    enumerate_family(3, &[ParamKind::Sigma, ParamKind::Nu], &SCENARIO_BLOCK)
}

/// Per replication, ranks the candidates (default: `UUU`, `UCU`, `UUC`,
/// `UCC`) by BIC and tallies the winners.
pub fn bic_selection_experiment(sc: &ScenarioConfig, candidates: &[ModelCode]) -> Result<SelectionFrequencies> {
    check_reps(sc)?;
    let cands = scenario_candidates(sc, candidates)?;
    let per_rep: Vec<Result<Option<(usize, f64)>>> = for_each_rep(sc, |rep| {
        let data = generate_scenario(sc, rep)?;
        match select_by_bic(&data, &cands, 3, &rep_fit_config(sc, rep)) {
            Ok(report) => {
                let err = report.entries.iter().filter_map(|e| e.fit.as_ref()).map(density_error).fold(0.0, f64::max);
                Ok(Some((report.winner, err)))
            }
            Err(Error::Selection(_)) => Ok(None),
            Err(e) => Err(e),
        }
    });
    let per_rep = per_rep.into_iter().collect::<Result<Vec<_>>>()?;
    let mut wins = vec![0usize; cands.len()];
    let mut max_density_error: f64 = 0.0;
    for (winner, err) in per_rep.iter().flatten() {
        wins[*winner] += 1;
        max_density_error = max_density_error.max(*err);
    }
    let succeeded: usize = wins.iter().sum();
    let failed = sc.reps - succeeded;
    check_failures("selection", failed, sc.reps)?;
    let rows = cands
        .iter()
        .zip(wins)
        .map(|(c, w)| FrequencyRow { candidate: c.label(), wins: w, proportion: w as f64 / succeeded as f64 })
        .collect();
    Ok(SelectionFrequencies { scenario: sc.into(), rows, succeeded, failed, max_density_error })
}

pub const MOMENT_NAMES: [&str; 4] = ["mean", "variance", "skewness", "kurtosis"];

fn moment_vector(m: &MarginalMoments) -> [f64; 4] {
    [m.mean, m.variance, m.skewness, m.kurtosis]
}

/// Per replication, fits every candidate, computes the fitted marginal
/// moments, and reports their RMSE against the true model's moments for
/// each candidate and for the BIC winner (row label `BIC`).
pub fn moment_rmse_experiment(sc: &ScenarioConfig, candidates: &[ModelCode]) -> Result<MomentRmseTable> {
    check_reps(sc)?;
    let cands = scenario_candidates(sc, candidates)?;
    let truth = moment_vector(&marginal_moments(&sc.true_model()?));

    type RepMoments = (Vec<Option<[f64; 4]>>, usize, f64);
    let per_rep: Vec<Result<Option<RepMoments>>> = for_each_rep(sc, |rep| {
        let data = generate_scenario(sc, rep)?;
        match select_by_bic(&data, &cands, 3, &rep_fit_config(sc, rep)) {
            Ok(report) => {
                let moments = report
                    .entries
                    .iter()
                    .map(|e| e.fit.as_ref().map(|f| moment_vector(&marginal_moments(&f.model))))
                    .collect();
                let err = report.entries.iter().filter_map(|e| e.fit.as_ref()).map(density_error).fold(0.0, f64::max);
                Ok(Some((moments, report.winner, err)))
            }
            Err(Error::Selection(_)) => Ok(None),
            Err(e) => Err(e),
        }
    });
    let per_rep = per_rep.into_iter().collect::<Result<Vec<_>>>()?;

    let mut labels: Vec<String> = cands.iter().map(Candidate::label).collect();
    labels.push("BIC".into());
    let mut sq = vec![[0.0f64; 4]; labels.len()];
    let mut counts = vec![0usize; labels.len()];
    let mut max_density_error: f64 = 0.0;
    let bic_slot = cands.len();
    for (moments, winner, err) in per_rep.iter().flatten() {
        max_density_error = max_density_error.max(*err);
        let winner_moments = moments[*winner].expect("the winner has a fit");
        let slots = moments.iter().enumerate().filter_map(|(i, m)| m.map(|m| (i, m)));
        for (slot, m) in slots.chain(std::iter::once((bic_slot, winner_moments))) {
            counts[slot] += 1;
            for j in 0..4 {
                sq[slot][j] += (m[j] - truth[j]).powi(2);
            }
        }
    }

    let mut rows = Vec::new();
    let mut tallies = Vec::new();
    for (slot, label) in labels.iter().enumerate() {
        let failed = sc.reps - counts[slot];
        check_failures(label, failed, sc.reps)?;
        for j in 0..4 {
            rows.push(MomentRow {
                spec: label.clone(),
                moment: MOMENT_NAMES[j].into(),
                truth: truth[j],
                rmse: (sq[slot][j] / counts[slot] as f64).sqrt(),
            });
        }
        tallies.push(FitTally { spec: label.clone(), succeeded: counts[slot], failed });
    }
    Ok(MomentRmseTable { scenario: sc.into(), rows, tallies, max_density_error })
}
