//! Constrained ECM estimation.
//!
//! Each cycle runs an E-step, the closed-form weight update, and then one
//! Newton-Raphson step per constrained block in the order location, scale,
//! shape. Every step is safeguarded: a proposal that leaves the parameter
//! domain or lowers the block's share of the expected complete-data
//! log-likelihood is halved up to [`MAX_HALVINGS`] times and otherwise
//! skipped, so the observed likelihood cannot decrease beyond rounding.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::constraints::{ConstraintSpec, ParamKind};
use crate::error::{Error, Result};
use crate::gnd::GndParams;
use crate::kmeans::{count_distinct, kmeans_init};
use crate::mixture::{
    bic, e_step_unchecked, free_parameter_count, param, param_mut, MixtureModel, Responsibilities,
};
use crate::special::{digamma_pos, ln_gamma_pos, trigamma_pos};

/// Halvings attempted before a block update is abandoned for the cycle.
pub const MAX_HALVINGS: u32 = 10;
/// Floor applied to mixture weights after each update.
pub const WEIGHT_FLOOR: f64 = 1e-10;
/// Curvatures below this magnitude are treated as stationary.
pub const MIN_CURVATURE: f64 = 1e-12;
/// Per-cycle log-likelihood drop tolerated before it is reported.
pub const MONOTONE_SLACK: f64 = 1e-8;

/// Tuning knobs of the fitter; every field has a default.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitConfig {
    pub max_iters: usize,
    pub loglik_rel_tol: f64,
    pub nu_grad_skip_threshold: f64,
    pub nu_min: f64,
    pub nu_max: f64,
    pub sigma_min: f64,
    pub n_starts: usize,
    pub use_adaptive_step: bool,
    pub seed: u64,
    /// Holds every shape parameter at this value (2 gives normal mixtures).
    pub fixed_nu: Option<f64>,
    /// Run the independent starts on the rayon pool.
    pub parallel: bool,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            max_iters: 500,
            loglik_rel_tol: 1e-6,
            nu_grad_skip_threshold: 1e-3,
            nu_min: 0.1,
            nu_max: 20.0,
            sigma_min: 1e-6,
            n_starts: 5,
            use_adaptive_step: true,
            seed: 0,
            fixed_nu: None,
            parallel: false,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("loglik_rel_tol", self.loglik_rel_tol),
            ("nu_grad_skip_threshold", self.nu_grad_skip_threshold),
            ("nu_min", self.nu_min),
            ("sigma_min", self.sigma_min),
        ];
        if let Some((name, v)) = positive.iter().find(|(_, v)| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::Config(format!("{name} must be > 0, got {v}")));
        }
        if !(self.nu_min < self.nu_max) {
            return Err(Error::Config(format!("nu_min {} must be below nu_max {}", self.nu_min, self.nu_max)));
        }
        if self.n_starts == 0 {
            return Err(Error::Config("n_starts must be at least 1".into()));
        }
        if let Some(nu) = self.fixed_nu {
            if !(nu.is_finite() && nu > 0.0) {
                return Err(Error::Config(format!("fixed_nu must be > 0, got {nu}")));
            }
        }
        Ok(())
    }

    /// Reads a config file: TOML when the extension is `.toml`, JSON otherwise.
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let cfg: FitConfig = if path.extension().is_some_and(|e| e == "toml") {
            toml::from_str(&text).map_err(|e| Error::Config(e.to_string()))?
        } else {
            serde_json::from_str(&text)?
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Why a block update did not move its parameter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SkipReason {
    /// `|g'|` below [`MIN_CURVATURE`].
    FlatCurvature,
    NonFinite,
    /// No halving produced an admissible, non-decreasing proposal.
    NoAscent,
    /// Shape gradient below the configured threshold.
    SmallGradient,
}

/// Structured warnings collected during a fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum Diagnostic {
    StepHalved { iteration: usize, kind: ParamKind, block: Vec<usize>, halvings: u32 },
    UpdateSkipped { iteration: usize, kind: ParamKind, block: Vec<usize>, reason: SkipReason },
    /// The Newton curvature had the wrong sign; an ascent surrogate was used.
    CurvatureFallback { iteration: usize, kind: ParamKind, block: Vec<usize> },
    Clamped { iteration: usize, kind: ParamKind, block: Vec<usize>, value: f64 },
    EmptyComponent { iteration: usize, component: usize },
    UnderflowRows { iteration: usize, count: usize },
    LikelihoodDecrease { iteration: usize, delta: f64 },
    KmeansReseeded { attempts: usize },
    KmeansSplit { component: usize },
    StartFailed { start: usize, message: String },
}

/// Value and first two derivatives of one block's share of the Q-function.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlockDerivatives {
    pub gradient: f64,
    pub curvature: f64,
}

/// Outcome of one safeguarded Newton step on a block.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockUpdate {
    /// New common value for every component in the block.
    pub value: f64,
    pub halvings: u32,
    pub skipped: Option<SkipReason>,
    pub clamped: bool,
    pub curvature_fallback: bool,
}

impl BlockUpdate {
    fn skip(value: f64, reason: SkipReason) -> Self {
        Self { value, halvings: 0, skipped: Some(reason), clamped: false, curvature_fallback: false }
    }
}

/// Result of a fit: the selected start's model and its history.
#[derive(Debug, Clone, Serialize)]
pub struct FitResult {
    pub model: MixtureModel,
    pub log_lik: f64,
    pub bic: f64,
    pub n_params: usize,
    pub n_obs: usize,
    pub iterations: usize,
    pub loglik_trace: Vec<f64>,
    pub responsibilities: Responsibilities,
    pub converged: bool,
    /// Index of the winning start.
    pub start: usize,
    pub diagnostics: Vec<Diagnostic>,
}

impl FitResult {
    /// Cycles whose log-likelihood fell by more than [`MONOTONE_SLACK`].
    pub fn monotonicity_violations(&self) -> usize {
        self.loglik_trace.windows(2).filter(|w| w[1] < w[0] - MONOTONE_SLACK).count()
    }
}

/// Expected complete-data log-likelihood
/// `sum_n sum_k z_nk (ln pi_k + ln f_k(x_n))`.
pub fn q_function(data: &[f64], z: &Responsibilities, m: &MixtureModel) -> f64 {
    let mut total = 0.0;
    for (k, (w, c)) in m.weights().iter().zip(m.components()).enumerate() {
        let offset = w.ln() + c.log_normalizer();
        for (n, &x) in data.iter().enumerate() {
            let zk = z.get(n, k);
            if zk != 0.0 {
                total += zk * (offset - ((x - c.mu).abs() / c.sigma).powf(c.nu));
            }
        }
    }
    total
}

// ---------------------------------------------------------------------------
// weights
// ---------------------------------------------------------------------------

/// Closed-form weight update with flooring of empty components.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightUpdate {
    pub weights: Vec<f64>,
    /// Components whose column mass fell below `1e-10 N`.
    pub empty: Vec<usize>,
}

/// `pi_k = sum_n z_nk / N`.
pub fn update_weights(z: &Responsibilities) -> WeightUpdate {
    let n = z.n() as f64;
    let mut weights: Vec<f64> = z.column_sums().into_iter().map(|s| s / n).collect();
    let empty: Vec<usize> = weights.iter().enumerate().filter(|(_, w)| **w < WEIGHT_FLOOR).map(|(k, _)| k).collect();
    if !empty.is_empty() {
        for w in &mut weights {
            *w = w.max(WEIGHT_FLOOR);
        }
    }
    let total: f64 = weights.iter().sum();
    for w in &mut weights {
        *w /= total;
    }
    WeightUpdate { weights, empty }
}

// ---------------------------------------------------------------------------
// location
// ---------------------------------------------------------------------------

/// Block Q-terms depending on the common location `mu`.
pub fn mu_block_q(block: &[usize], mu: f64, data: &[f64], z: &Responsibilities, comps: &[GndParams]) -> f64 {
    block
        .iter()
        .map(|&k| {
            let c = &comps[k];
            let scale = c.sigma.powf(c.nu);
            -data
                .iter()
                .enumerate()
                .map(|(n, &x)| z.get(n, k) * (x - mu).abs().powf(c.nu))
                .sum::<f64>()
                / scale
        })
        .sum()
}

/// `g` and `g'` of the location update at the block's current common value.
/// Observations tied with `mu` contribute nothing.
pub fn mu_block_derivatives(block: &[usize], data: &[f64], z: &Responsibilities, comps: &[GndParams]) -> BlockDerivatives {
    let (d, _) = mu_derivatives_with_irls(block, data, z, comps);
    d
}

// Also returns the IRLS curvature `-sum w`, `w = z nu sigma^-nu |x - mu|^(nu-2)`.
fn mu_derivatives_with_irls(
    block: &[usize],
    data: &[f64],
    z: &Responsibilities,
    comps: &[GndParams],
) -> (BlockDerivatives, f64) {
    let mu = comps[block[0]].mu;
    let (mut g, mut gp, mut irls) = (0.0, 0.0, 0.0);
    for &k in block {
        let c = &comps[k];
        let factor = c.nu / c.sigma.powf(c.nu);
        let (mut up, mut curv, mut w_sum) = (0.0, 0.0, 0.0);
        for (n, &x) in data.iter().enumerate() {
            let d = x - mu;
            if d == 0.0 {
                continue;
            }
            let zk = z.get(n, k);
            if zk == 0.0 {
                continue;
            }
            let ad = d.abs();
            let pow1 = ad.powf(c.nu - 1.0);
            let pow2 = pow1 / ad;
            up += zk * pow1.copysign(d);
            curv += zk * pow2;
            w_sum += zk * pow2;
        }
        g += factor * up;
        gp -= factor * (c.nu - 1.0) * curv;
        irls -= factor * w_sum;
    }
    (BlockDerivatives { gradient: g, curvature: gp }, irls)
}

/// One safeguarded Newton step for the block's common location.
pub fn update_mu_block(block: &[usize], data: &[f64], z: &Responsibilities, comps: &[GndParams]) -> BlockUpdate {
    let current = comps[block[0]].mu;
    let (d, irls) = mu_derivatives_with_irls(block, data, z, comps);
    let mut fallback = false;
    let curvature = if d.curvature < 0.0 {
        d.curvature
    } else {
        // |x - mu|^nu is not concave for nu < 1; use the quadratic minorizer
        fallback = true;
        irls
    };
    if !(d.gradient.is_finite() && curvature.is_finite()) {
        return BlockUpdate::skip(current, SkipReason::NonFinite);
    }
    if curvature.abs() < MIN_CURVATURE {
        return BlockUpdate::skip(current, SkipReason::FlatCurvature);
    }
    let step = -d.gradient / curvature;
    let q = |mu: f64| mu_block_q(block, mu, data, z, comps);
    let mut out = line_search(current, step, q, |v| v.is_finite().then_some((v, false)));
    out.curvature_fallback = fallback;
    out
}

// ---------------------------------------------------------------------------
// scale
// ---------------------------------------------------------------------------

/// Per-component sufficient statistics of the scale update:
/// `S_k = sum_n z_nk` and `A_k = sum_n z_nk |x_n - mu_k|^nu_k`.
fn scale_stats(block: &[usize], data: &[f64], z: &Responsibilities, comps: &[GndParams]) -> Vec<(f64, f64, f64)> {
    block
        .iter()
        .map(|&k| {
            let c = &comps[k];
            let (mut s, mut a) = (0.0, 0.0);
            for (n, &x) in data.iter().enumerate() {
                let zk = z.get(n, k);
                s += zk;
                a += zk * (x - c.mu).abs().powf(c.nu);
            }
            (s, a, c.nu)
        })
        .collect()
}

fn sigma_q_from_stats(stats: &[(f64, f64, f64)], sigma: f64) -> f64 {
    stats.iter().map(|&(s, a, nu)| -s * sigma.ln() - a * sigma.powf(-nu)).sum()
}

fn sigma_derivs_from_stats(stats: &[(f64, f64, f64)], sigma: f64) -> BlockDerivatives {
    let mut g = 0.0;
    let mut gp = 0.0;
    for &(s, a, nu) in stats {
        g += -s / sigma + nu * sigma.powf(-nu - 1.0) * a;
        gp += s / (sigma * sigma) + nu * (-nu - 1.0) * sigma.powf(-nu - 2.0) * a;
    }
    BlockDerivatives { gradient: g, curvature: gp }
}

/// Block Q-terms depending on the common scale `sigma`.
pub fn sigma_block_q(block: &[usize], sigma: f64, data: &[f64], z: &Responsibilities, comps: &[GndParams]) -> f64 {
    sigma_q_from_stats(&scale_stats(block, data, z, comps), sigma)
}

pub fn sigma_block_derivatives(
    block: &[usize],
    data: &[f64],
    z: &Responsibilities,
    comps: &[GndParams],
) -> BlockDerivatives {
    sigma_derivs_from_stats(&scale_stats(block, data, z, comps), comps[block[0]].sigma)
}

/// One safeguarded Newton step for the block's common scale, using the
/// locations already updated this cycle.
pub fn update_sigma_block(
    block: &[usize],
    data: &[f64],
    z: &Responsibilities,
    comps: &[GndParams],
    cfg: &FitConfig,
) -> BlockUpdate {
    let current = comps[block[0]].sigma;
    let stats = scale_stats(block, data, z, comps);
    let d = sigma_derivs_from_stats(&stats, current);
    let mut fallback = false;
    let curvature = if d.curvature < 0.0 {
        d.curvature
    } else {
        fallback = true;
        // curvature at the stationary point, -sum nu_k S_k / sigma^2
        -stats.iter().map(|&(s, _, nu)| nu * s).sum::<f64>() / (current * current)
    };
    if !(d.gradient.is_finite() && curvature.is_finite()) {
        return BlockUpdate::skip(current, SkipReason::NonFinite);
    }
    if curvature.abs() < MIN_CURVATURE {
        return BlockUpdate::skip(current, SkipReason::FlatCurvature);
    }
    let step = -d.gradient / curvature;
    let sigma_min = cfg.sigma_min;
    let mut out = line_search(
        current,
        step,
        |s| sigma_q_from_stats(&stats, s),
        |s| {
            if !(s.is_finite() && s > 0.0) {
                None
            } else if s < sigma_min {
                Some((sigma_min, true))
            } else {
                Some((s, false))
            }
        },
    );
    out.curvature_fallback = fallback;
    out
}

// ---------------------------------------------------------------------------
// shape
// ---------------------------------------------------------------------------

/// Adaptive Newton step size for the shape update, `exp(-nu)`.
pub fn adaptive_step(nu: f64) -> f64 {
    (-nu).exp()
}

/// Per-component `(S_k, [(z_nk, ln|y_nk|)])` with `y = (x - mu_k)/sigma_k`;
/// ties `x == mu_k` are dropped.
fn shape_stats(block: &[usize], data: &[f64], z: &Responsibilities, comps: &[GndParams]) -> Vec<(f64, Vec<(f64, f64)>)> {
    block
        .iter()
        .map(|&k| {
            let c = &comps[k];
            let mut s = 0.0;
            let mut terms = Vec::with_capacity(data.len());
            for (n, &x) in data.iter().enumerate() {
                let zk = z.get(n, k);
                s += zk;
                let y = (x - c.mu).abs() / c.sigma;
                if zk != 0.0 && y != 0.0 {
                    terms.push((zk, y.ln()));
                }
            }
            (s, terms)
        })
        .collect()
}

fn nu_q_from_stats(stats: &[(f64, Vec<(f64, f64)>)], nu: f64) -> f64 {
    let norm = nu.ln() - ln_gamma_pos(1.0 / nu);
    stats
        .iter()
        .map(|(s, terms)| s * norm - terms.iter().map(|&(zk, ly)| zk * (nu * ly).exp()).sum::<f64>())
        .sum()
}

fn nu_derivs_from_stats(stats: &[(f64, Vec<(f64, f64)>)], nu: f64) -> BlockDerivatives {
    let inv = 1.0 / nu;
    let psi = digamma_pos(inv);
    let psi1 = trigamma_pos(inv);
    let norm_g = inv * (inv * psi + 1.0);
    let norm_gp = -inv * inv * (1.0 + 2.0 * inv * psi + inv * inv * psi1);
    let mut g = 0.0;
    let mut gp = 0.0;
    for (s, terms) in stats {
        let (mut t1, mut t2) = (0.0, 0.0);
        for &(zk, ly) in terms {
            let p = zk * (nu * ly).exp();
            t1 += p * ly;
            t2 += p * ly * ly;
        }
        g += s * norm_g - t1;
        gp += s * norm_gp - t2;
    }
    BlockDerivatives { gradient: g, curvature: gp }
}

/// Block Q-terms depending on the common shape `nu` (constants dropped).
pub fn nu_block_q(block: &[usize], nu: f64, data: &[f64], z: &Responsibilities, comps: &[GndParams]) -> f64 {
    nu_q_from_stats(&shape_stats(block, data, z, comps), nu)
}

pub fn nu_block_derivatives(block: &[usize], data: &[f64], z: &Responsibilities, comps: &[GndParams]) -> BlockDerivatives {
    nu_derivs_from_stats(&shape_stats(block, data, z, comps), comps[block[0]].nu)
}

/// One damped, safeguarded Newton step for the block's common shape, using
/// locations and scales already updated this cycle. Skipped when the
/// undamped gradient is below `cfg.nu_grad_skip_threshold`.
pub fn update_nu_block(
    block: &[usize],
    data: &[f64],
    z: &Responsibilities,
    comps: &[GndParams],
    cfg: &FitConfig,
) -> BlockUpdate {
    let current = comps[block[0]].nu;
    let stats = shape_stats(block, data, z, comps);
    let d = nu_derivs_from_stats(&stats, current);
    if !(d.gradient.is_finite() && d.curvature.is_finite()) {
        return BlockUpdate::skip(current, SkipReason::NonFinite);
    }
    if d.gradient.abs() < cfg.nu_grad_skip_threshold {
        return BlockUpdate::skip(current, SkipReason::SmallGradient);
    }
    let mut fallback = false;
    let curvature = if d.curvature < 0.0 {
        d.curvature
    } else {
        fallback = true;
        -d.curvature.abs().max(d.gradient.abs())
    };
    if curvature.abs() < MIN_CURVATURE {
        return BlockUpdate::skip(current, SkipReason::FlatCurvature);
    }
    let alpha = if cfg.use_adaptive_step { adaptive_step(current) } else { 1.0 };
    let step = -alpha * d.gradient / curvature;
    let (lo, hi) = (cfg.nu_min, cfg.nu_max);
    let mut out = line_search(
        current,
        step,
        |nu| nu_q_from_stats(&stats, nu),
        |nu| {
            if !nu.is_finite() {
                None
            } else if nu < lo {
                Some((lo, true))
            } else if nu > hi {
                Some((hi, true))
            } else {
                Some((nu, false))
            }
        },
    );
    out.curvature_fallback = fallback;
    out
}

/// Step-halving search: accepts the first admissible proposal whose
/// objective is not below the current one. `admit` maps a raw proposal to
/// the (possibly clamped) value to test, or rejects it.
fn line_search(
    current: f64,
    mut step: f64,
    objective: impl Fn(f64) -> f64,
    admit: impl Fn(f64) -> Option<(f64, bool)>,
) -> BlockUpdate {
    let base = objective(current);
    if !base.is_finite() {
        return BlockUpdate::skip(current, SkipReason::NonFinite);
    }
    for halvings in 0..=MAX_HALVINGS {
        if let Some((value, clamped)) = admit(current + step) {
            let q = objective(value);
            if q.is_finite() && q >= base {
                return BlockUpdate { value, halvings, skipped: None, clamped, curvature_fallback: false };
            }
        }
        step *= 0.5;
    }
    BlockUpdate::skip(current, SkipReason::NoAscent)
}

// ---------------------------------------------------------------------------
// driver
// ---------------------------------------------------------------------------

fn set_block(comps: &mut [GndParams], block: &[usize], kind: ParamKind, value: f64) {
    for &k in block {
        *param_mut(&mut comps[k], kind) = value;
    }
}

fn record(diags: &mut Vec<Diagnostic>, iteration: usize, kind: ParamKind, block: &[usize], up: &BlockUpdate) {
    let block = block.to_vec();
    if up.curvature_fallback {
        diags.push(Diagnostic::CurvatureFallback { iteration, kind, block: block.clone() });
    }
    if let Some(reason) = up.skipped {
        diags.push(Diagnostic::UpdateSkipped { iteration, kind, block, reason });
        return;
    }
    if up.halvings > 0 {
        diags.push(Diagnostic::StepHalved { iteration, kind, block: block.clone(), halvings: up.halvings });
    }
    if up.clamped {
        diags.push(Diagnostic::Clamped { iteration, kind, block, value: up.value });
    }
}

struct RunOutcome {
    model: MixtureModel,
    log_lik: f64,
    trace: Vec<f64>,
    responsibilities: Responsibilities,
    iterations: usize,
    converged: bool,
    diagnostics: Vec<Diagnostic>,
}

/// Iterates ECM cycles from `init` until the relative log-likelihood change
/// drops below `cfg.loglik_rel_tol` or `cfg.max_iters` is reached.
fn run_from(data: &[f64], init: MixtureModel, cfg: &FitConfig) -> Result<RunOutcome> {
    let spec = init.constraints().clone();
    let mut model = init;
    if let Some(nu) = cfg.fixed_nu {
        let (_, comps) = model.parts_mut();
        comps.iter_mut().for_each(|c| c.nu = nu);
    }
    let mut diagnostics = Vec::new();
    let mut e = e_step_unchecked(data, &model);
    if !e.log_lik.is_finite() {
        return Err(Error::Input("initial model has non-finite log-likelihood".into()));
    }
    let mut trace = vec![e.log_lik];
    let mut converged = false;
    let mut iterations = 0;

    for iteration in 1..=cfg.max_iters {
        iterations = iteration;
        let z = &e.responsibilities;
        let wu = update_weights(z);
        for &component in &wu.empty {
            diagnostics.push(Diagnostic::EmptyComponent { iteration, component });
        }
        let (weights, comps) = model.parts_mut();
        *weights = wu.weights;

        for block in spec.blocks(ParamKind::Mu) {
            let up = update_mu_block(block, data, z, comps);
            record(&mut diagnostics, iteration, ParamKind::Mu, block, &up);
            set_block(comps, block, ParamKind::Mu, up.value);
        }
        for block in spec.blocks(ParamKind::Sigma) {
            let up = update_sigma_block(block, data, z, comps, cfg);
            record(&mut diagnostics, iteration, ParamKind::Sigma, block, &up);
            set_block(comps, block, ParamKind::Sigma, up.value);
        }
        if cfg.fixed_nu.is_none() {
            for block in spec.blocks(ParamKind::Nu) {
                let up = update_nu_block(block, data, z, comps, cfg);
                record(&mut diagnostics, iteration, ParamKind::Nu, block, &up);
                set_block(comps, block, ParamKind::Nu, up.value);
            }
        }

        let prev = e.log_lik;
        e = e_step_unchecked(data, &model);
        if !e.underflow_rows.is_empty() {
            diagnostics.push(Diagnostic::UnderflowRows { iteration, count: e.underflow_rows.len() });
        }
        if !e.log_lik.is_finite() {
            return Err(Error::FitFailure {
                message: format!("log-likelihood became non-finite at iteration {iteration}"),
                diagnostics,
            });
        }
        trace.push(e.log_lik);
        let delta = e.log_lik - prev;
        if delta < -MONOTONE_SLACK {
            diagnostics.push(Diagnostic::LikelihoodDecrease { iteration, delta });
        }
        if delta.abs() <= cfg.loglik_rel_tol * prev.abs() {
            converged = true;
            break;
        }
    }
    model.validate()?;
    Ok(RunOutcome {
        log_lik: e.log_lik,
        responsibilities: e.responsibilities,
        model,
        trace,
        iterations,
        converged,
        diagnostics,
    })
}

fn check_fit_input(data: &[f64], k: usize) -> Result<()> {
    if k == 0 {
        return Err(Error::Input("K must be at least 1".into()));
    }
    if data.len() <= 4 * k {
        return Err(Error::Input(format!("need more than 4K = {} observations, got {}", 4 * k, data.len())));
    }
    if let Some(i) = data.iter().position(|x| !x.is_finite()) {
        return Err(Error::Input(format!("observation {} is not finite", i + 1)));
    }
    Ok(())
}

fn finish(data: &[f64], run: RunOutcome, start: usize, mut extra: Vec<Diagnostic>) -> Result<FitResult> {
    let k = run.model.k();
    let n_params = free_parameter_count(k, run.model.constraints())?;
    extra.extend(run.diagnostics);
    Ok(FitResult {
        bic: bic(run.log_lik, n_params, data.len()),
        n_params,
        n_obs: data.len(),
        log_lik: run.log_lik,
        iterations: run.iterations,
        loglik_trace: run.trace,
        responsibilities: run.responsibilities,
        converged: run.converged,
        start,
        diagnostics: extra,
        model: run.model,
    })
}

/// Runs the fitter from a caller-supplied starting model.
pub fn ecm_fit_from(data: &[f64], init: &MixtureModel, cfg: &FitConfig) -> Result<FitResult> {
    cfg.validate()?;
    check_fit_input(data, init.k())?;
    init.validate()?;
    let run = run_from(data, init.clone(), cfg)?;
    finish(data, run, 0, Vec::new())
}

/// Multi-start constrained ECM. Start `s` is initialized by k-means with
/// seed `cfg.seed + s`; the start with the highest final log-likelihood wins,
/// ties going to fewer iterations and then to the lower start index.
pub fn ecm_fit(data: &[f64], k: usize, spec: &ConstraintSpec, cfg: &FitConfig) -> Result<FitResult> {
    cfg.validate()?;
    check_fit_input(data, k)?;
    if spec.k() != k {
        return Err(Error::Input(format!("constraint spec has K = {} but K = {k} was requested", spec.k())));
    }
    if count_distinct(data) < k {
        return Err(Error::Input(format!("need at least K = {k} distinct observations")));
    }

    let one_start = |start: usize| -> Result<(RunOutcome, Vec<Diagnostic>)> {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(start as u64));
        let init = kmeans_init(data, k, spec, cfg, &mut rng)?;
        let run = run_from(data, init.model, cfg)?;
        Ok((run, init.diagnostics))
    };
    let outcomes: Vec<Result<(RunOutcome, Vec<Diagnostic>)>> = if cfg.parallel {
        (0..cfg.n_starts).into_par_iter().map(one_start).collect()
    } else {
        (0..cfg.n_starts).map(one_start).collect()
    };

    let mut failures = Vec::new();
    let mut best: Option<(usize, RunOutcome, Vec<Diagnostic>)> = None;
    for (start, outcome) in outcomes.into_iter().enumerate() {
        match outcome {
            Ok((run, diags)) => {
                let better = match &best {
                    None => true,
                    Some((_, b, _)) => {
                        run.log_lik > b.log_lik || (run.log_lik == b.log_lik && run.iterations < b.iterations)
                    }
                };
                if better {
                    best = Some((start, run, diags));
                }
            }
            Err(e) => failures.push(Diagnostic::StartFailed { start, message: e.to_string() }),
        }
    }
    match best {
        Some((start, run, mut diags)) => {
            diags.extend(failures);
            finish(data, run, start, diags)
        }
        None => Err(Error::FitFailure { message: format!("all {} starts failed", cfg.n_starts), diagnostics: failures }),
    }
}

/// Closed-form normal-mixture EM updates (weights, means) from responsibilities.
pub fn normal_em_updates(data: &[f64], z: &Responsibilities) -> (Vec<f64>, Vec<f64>) {
    let sums = z.column_sums();
    let n = data.len() as f64;
    let weights = sums.iter().map(|s| s / n).collect();
    let means = (0..z.k())
        .map(|k| data.iter().enumerate().map(|(i, x)| z.get(i, k) * x).sum::<f64>() / sums[k])
        .collect();
    (weights, means)
}

pub(crate) fn block_mean(comps: &[GndParams], block: &[usize], kind: ParamKind) -> f64 {
    block.iter().map(|&k| param(&comps[k], kind)).sum::<f64>() / block.len() as f64
}
