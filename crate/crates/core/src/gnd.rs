//! The generalized normal (exponential power) distribution.
//!
//! Density `nu / (2 sigma Gamma(1/nu)) * exp(-|(x - mu)/sigma|^nu)`. With
//! `nu = 2` this is a normal law with standard deviation `sigma / sqrt(2)`,
//! with `nu = 1` a Laplace law.

use rand::Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::special::ln_gamma_pos;

/// Location, scale and shape of one generalized normal component.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GndParams {
    pub mu: f64,
    pub sigma: f64,
    pub nu: f64,
}

impl GndParams {
    pub fn new(mu: f64, sigma: f64, nu: f64) -> Result<Self> {
        let p = Self { mu, sigma, nu };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.mu.is_finite() {
            return Err(Error::ParameterDomain(format!("mu must be finite, got {}", self.mu)));
        }
        if !(self.sigma.is_finite() && self.sigma > 0.0) {
            return Err(Error::ParameterDomain(format!(
                "sigma must be finite and > 0, got {}",
                self.sigma
            )));
        }
        if !(self.nu.is_finite() && self.nu > 0.0) {
            return Err(Error::ParameterDomain(format!(
                "nu must be finite and > 0, got {}",
                self.nu
            )));
        }
        Ok(())
    }

    /// `ln(nu / (2 sigma Gamma(1/nu)))`, the log of the density at its mode.
    pub(crate) fn log_normalizer(&self) -> f64 {
        self.nu.ln() - std::f64::consts::LN_2 - self.sigma.ln() - ln_gamma_pos(1.0 / self.nu)
    }

    pub(crate) fn log_pdf_unchecked(&self, x: f64) -> f64 {
        self.log_normalizer() - ((x - self.mu).abs() / self.sigma).powf(self.nu)
    }
}

/// Log-density of the generalized normal distribution at `x`.
pub fn gnd_log_pdf(x: f64, p: &GndParams) -> Result<f64> {
    p.validate()?;
    if !x.is_finite() {
        return Err(Error::Input(format!("density evaluated at non-finite x = {x}")));
    }
    Ok(p.log_pdf_unchecked(x))
}

/// Density of the generalized normal distribution, `exp(gnd_log_pdf)`.
pub fn gnd_pdf(x: f64, p: &GndParams) -> Result<f64> {
    gnd_log_pdf(x, p).map(f64::exp)
}

/// Draws `n` i.i.d. variates as `mu + sigma * S * T^(1/nu)` with
/// `T ~ Gamma(1/nu, 1)` and `S` a fair random sign.
pub fn gnd_sample<R: Rng + ?Sized>(p: &GndParams, n: usize, rng: &mut R) -> Result<Vec<f64>> {
    p.validate()?;
    if n == 0 {
        return Err(Error::Input("sample size must be at least 1".into()));
    }
    let sampler = GndSampler::new(p)?;
    Ok((0..n).map(|_| sampler.draw(rng)).collect())
}

/// Reusable sampler for a single parameter set.
#[derive(Debug, Clone)]
pub struct GndSampler {
    params: GndParams,
    gamma: Gamma<f64>,
    inv_nu: f64,
}

impl GndSampler {
    pub fn new(p: &GndParams) -> Result<Self> {
        p.validate()?;
        let gamma = Gamma::new(1.0 / p.nu, 1.0)
            .map_err(|e| Error::ParameterDomain(format!("gamma sampler: {e}")))?;
        Ok(Self { params: *p, gamma, inv_nu: 1.0 / p.nu })
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let t: f64 = self.gamma.sample(rng);
        let magnitude = self.params.sigma * t.powf(self.inv_nu);
        if rng.random::<bool>() {
            self.params.mu + magnitude
        } else {
            self.params.mu - magnitude
        }
    }
}

/// `E|X - mu|^r = sigma^r Gamma((r + 1)/nu) / Gamma(1/nu)`.
pub fn gnd_abs_central_moment(p: &GndParams, r: u32) -> Result<f64> {
    p.validate()?;
    if r == 0 {
        return Err(Error::Input("moment order must be >= 1".into()));
    }
    Ok(abs_moment_unchecked(p, r))
}

pub(crate) fn abs_moment_unchecked(p: &GndParams, r: u32) -> f64 {
    let r = f64::from(r);
    let log_ratio = ln_gamma_pos((r + 1.0) / p.nu) - ln_gamma_pos(1.0 / p.nu);
    p.sigma.powf(r) * log_ratio.exp()
}

/// Signed central moment `E(X - mu)^r`: zero for odd `r` by symmetry.
pub fn gnd_central_moment(p: &GndParams, r: u32) -> Result<f64> {
    if r % 2 == 1 {
        p.validate()?;
        Ok(0.0)
    } else {
        gnd_abs_central_moment(p, r)
    }
}
