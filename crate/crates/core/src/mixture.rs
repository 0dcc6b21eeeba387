//! Finite mixtures of generalized normal components.

use serde::{Deserialize, Serialize};

use crate::constraints::{ConstraintSpec, ParamKind};
use crate::error::{Error, Result};
use crate::gnd::{abs_moment_unchecked, GndParams};

/// Tolerance on `sum(weights) == 1`.
pub const WEIGHT_SUM_TOL: f64 = 1e-12;

/// Weights, component parameters and the constraints they satisfy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawModel", into = "RawModel")]
pub struct MixtureModel {
    weights: Vec<f64>,
    components: Vec<GndParams>,
    constraints: ConstraintSpec,
}

#[derive(Serialize, Deserialize)]
struct RawModel {
    weights: Vec<f64>,
    components: Vec<GndParams>,
    constraints: Option<ConstraintSpec>,
}

impl TryFrom<RawModel> for MixtureModel {
    type Error = Error;

    fn try_from(raw: RawModel) -> Result<Self> {
        let k = raw.components.len();
        let constraints = raw.constraints.unwrap_or_else(|| ConstraintSpec::unconstrained(k));
        MixtureModel::new(raw.weights, raw.components, constraints)
    }
}

impl From<MixtureModel> for RawModel {
    fn from(m: MixtureModel) -> Self {
        RawModel { weights: m.weights, components: m.components, constraints: Some(m.constraints) }
    }
}

impl MixtureModel {
    pub fn new(weights: Vec<f64>, components: Vec<GndParams>, constraints: ConstraintSpec) -> Result<Self> {
        let m = Self { weights, components, constraints };
        m.validate()?;
        Ok(m)
    }

    /// Unconstrained model over the given components.
    pub fn unconstrained(weights: Vec<f64>, components: Vec<GndParams>) -> Result<Self> {
        let k = components.len();
        Self::new(weights, components, ConstraintSpec::unconstrained(k))
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.components.len();
        if k == 0 {
            return Err(Error::Input("mixture has no components".into()));
        }
        if self.weights.len() != k || self.constraints.k() != k {
            return Err(Error::Input(format!(
                "{} weights, {} components and a K = {} constraint spec do not agree",
                self.weights.len(),
                k,
                self.constraints.k()
            )));
        }
        if let Some(w) = self.weights.iter().find(|w| !(w.is_finite() && **w > 0.0)) {
            return Err(Error::ParameterDomain(format!("mixture weights must be > 0, got {w}")));
        }
        let total: f64 = self.weights.iter().sum();
        if (total - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(Error::ParameterDomain(format!("mixture weights sum to {total}, not 1")));
        }
        for c in &self.components {
            c.validate()?;
        }
        for kind in ParamKind::ALL {
            for block in self.constraints.blocks(kind) {
                let first = param(&self.components[block[0]], kind);
                if block.iter().any(|&i| param(&self.components[i], kind).to_bits() != first.to_bits()) {
                    return Err(Error::Input(format!(
                        "{} values differ inside constrained block {:?}",
                        kind.name(),
                        block.iter().map(|i| i + 1).collect::<Vec<_>>()
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn k(&self) -> usize {
        self.components.len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn components(&self) -> &[GndParams] {
        &self.components
    }

    pub fn constraints(&self) -> &ConstraintSpec {
        &self.constraints
    }

    /// Relabels components: new component `i` is old component `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        let constraints = self.constraints.permuted(perm)?;
        Self::new(
            perm.iter().map(|&i| self.weights[i]).collect(),
            perm.iter().map(|&i| self.components[i]).collect(),
            constraints,
        )
    }

    /// Mixture density at `x`.
    pub fn pdf(&self, x: f64) -> f64 {
        self.weights
            .iter()
            .zip(&self.components)
            .map(|(w, c)| w * c.log_pdf_unchecked(x).exp())
            .sum()
    }

    // The fitter mutates parameters in place and re-validates at the end.
    pub(crate) fn parts_mut(&mut self) -> (&mut Vec<f64>, &mut Vec<GndParams>) {
        (&mut self.weights, &mut self.components)
    }
}

pub(crate) fn param(c: &GndParams, kind: ParamKind) -> f64 {
    match kind {
        ParamKind::Mu => c.mu,
        ParamKind::Sigma => c.sigma,
        ParamKind::Nu => c.nu,
    }
}

pub(crate) fn param_mut(c: &mut GndParams, kind: ParamKind) -> &mut f64 {
    match kind {
        ParamKind::Mu => &mut c.mu,
        ParamKind::Sigma => &mut c.sigma,
        ParamKind::Nu => &mut c.nu,
    }
}

/// Row-major `N x K` matrix of posterior membership probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct Responsibilities {
    n: usize,
    k: usize,
    values: Vec<f64>,
}

impl Responsibilities {
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let k = rows.first().map_or(0, Vec::len);
        if k == 0 || rows.iter().any(|r| r.len() != k) {
            return Err(Error::Input("responsibility rows must be nonempty and equally long".into()));
        }
        Ok(Self { n: rows.len(), k, values: rows.concat() })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> usize {
        self.k
    }

    #[inline]
    pub fn get(&self, n: usize, k: usize) -> f64 {
        self.values[n * self.k + k]
    }

    pub fn row(&self, n: usize) -> &[f64] {
        &self.values[n * self.k..(n + 1) * self.k]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks_exact(self.k)
    }

    pub fn column_sums(&self) -> Vec<f64> {
        let mut sums = vec![0.0; self.k];
        for row in self.rows() {
            for (s, z) in sums.iter_mut().zip(row) {
                *s += z;
            }
        }
        sums
    }
}

impl Serialize for Responsibilities {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        use serde::ser::SerializeSeq;
        let mut seq = serializer.serialize_seq(Some(self.n))?;
        for row in self.rows() {
            seq.serialize_element(row)?;
        }
        seq.end()
    }
}

/// Output of one E-step pass.
#[derive(Debug, Clone)]
pub struct EStep {
    pub log_lik: f64,
    pub responsibilities: Responsibilities,
    /// Observations whose density underflowed under every component; their
    /// rows were set to `1/K`.
    pub underflow_rows: Vec<usize>,
}

fn check_data(data: &[f64]) -> Result<()> {
    if data.is_empty() {
        return Err(Error::Input("data set is empty".into()));
    }
    if let Some(i) = data.iter().position(|x| !x.is_finite()) {
        return Err(Error::Input(format!("observation {} is not finite", i + 1)));
    }
    Ok(())
}

/// Computes the log-likelihood and responsibilities in log space.
pub fn e_step(data: &[f64], m: &MixtureModel) -> Result<EStep> {
    check_data(data)?;
    m.validate()?;
    Ok(e_step_unchecked(data, m))
}

pub(crate) fn e_step_unchecked(data: &[f64], m: &MixtureModel) -> EStep {
    let k = m.k();
    let offsets: Vec<f64> = m
        .weights
        .iter()
        .zip(&m.components)
        .map(|(w, c)| w.ln() + c.log_normalizer())
        .collect();
    let mut values = vec![0.0; data.len() * k];
    let mut log_lik = 0.0;
    let mut underflow_rows = Vec::new();
    for (n, (&x, row)) in data.iter().zip(values.chunks_exact_mut(k)).enumerate() {
        let mut max = f64::NEG_INFINITY;
        for ((slot, c), off) in row.iter_mut().zip(&m.components).zip(&offsets) {
            *slot = off - ((x - c.mu).abs() / c.sigma).powf(c.nu);
            max = max.max(*slot);
        }
        if !max.is_finite() {
            row.fill(1.0 / k as f64);
            underflow_rows.push(n);
            log_lik += f64::NEG_INFINITY;
            continue;
        }
        let mut total = 0.0;
        for slot in row.iter_mut() {
            *slot = (*slot - max).exp();
            total += *slot;
        }
        for slot in row.iter_mut() {
            *slot /= total;
        }
        log_lik += max + total.ln();
    }
    EStep { log_lik, responsibilities: Responsibilities { n: data.len(), k, values }, underflow_rows }
}

/// `sum_n log sum_k pi_k f_k(x_n)`, inner sum by log-sum-exp.
pub fn log_likelihood(data: &[f64], m: &MixtureModel) -> Result<f64> {
    check_data(data)?;
    m.validate()?;
    let offsets: Vec<f64> = m
        .weights
        .iter()
        .zip(&m.components)
        .map(|(w, c)| w.ln() + c.log_normalizer())
        .collect();
    let mut terms = vec![0.0; m.k()];
    Ok(data
        .iter()
        .map(|&x| {
            for ((t, c), off) in terms.iter_mut().zip(&m.components).zip(&offsets) {
                *t = off - ((x - c.mu).abs() / c.sigma).powf(c.nu);
            }
            log_sum_exp(&terms)
        })
        .sum())
}

pub(crate) fn log_sum_exp(terms: &[f64]) -> f64 {
    let max = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + terms.iter().map(|t| (t - max).exp()).sum::<f64>().ln()
}

/// Posterior membership probabilities; rows sum to one.
pub fn responsibilities(data: &[f64], m: &MixtureModel) -> Result<EStep> {
    e_step(data, m)
}

/// `(K - 1) + |mu blocks| + |sigma blocks| + |nu blocks|`.
pub fn free_parameter_count(k: usize, spec: &ConstraintSpec) -> Result<usize> {
    if spec.k() != k {
        return Err(Error::Input(format!("spec has K = {} but {k} was requested", spec.k())));
    }
    Ok(k - 1 + ParamKind::ALL.iter().map(|&kind| spec.blocks(kind).len()).sum::<usize>())
}

/// Bayesian information criterion `p ln(n) - 2 log L`; lower is better.
pub fn bic(log_lik: f64, p: usize, n: usize) -> f64 {
    p as f64 * (n as f64).ln() - 2.0 * log_lik
}

/// Mean, variance, skewness and (non-excess) kurtosis of the marginal law.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MarginalMoments {
    pub mean: f64,
    pub variance: f64,
    pub skewness: f64,
    pub kurtosis: f64,
}

/// Analytic moments of the mixture. Component central moments about the
/// mixture mean come from the binomial expansion of `(X - mu_k + mu_k - m)^r`.
pub fn marginal_moments(m: &MixtureModel) -> MarginalMoments {
    let mean: f64 = m.weights.iter().zip(&m.components).map(|(w, c)| w * c.mu).sum();
    let mut central = [0.0; 5];
    for (w, c) in m.weights.iter().zip(&m.components) {
        let shift = c.mu - mean;
        // own central moments, index = order
        let own = [1.0, 0.0, abs_moment_unchecked(c, 2), 0.0, abs_moment_unchecked(c, 4)];
        for r in 2..=4usize {
            let mut acc = 0.0;
            for j in 0..=r {
                acc += binomial(r, j) * shift.powi((r - j) as i32) * own[j];
            }
            central[r] += w * acc;
        }
    }
    let variance = central[2];
    MarginalMoments {
        mean,
        variance,
        skewness: central[3] / variance.powf(1.5),
        kurtosis: central[4] / (variance * variance),
    }
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Numerical integral of the mixture density over the real line.
///
/// Each component's mode is a breakpoint. Every piece between breakpoints is
/// integrated outward from the nearer mode over geometrically growing
/// Simpson segments, which resolves both the cusp of small shapes and long
/// tails. The outer tails end where every component has negligible mass.
pub fn density_mass(m: &MixtureModel) -> f64 {
    let f = |x: f64| m.pdf(x);
    let mut modes: Vec<f64> = m.components.iter().map(|c| c.mu).collect();
    modes.sort_by(f64::total_cmp);
    modes.dedup();
    let first_step = m.components.iter().map(|c| c.sigma).fold(f64::INFINITY, f64::min) * 1e-6;
    let reach = m
        .components
        .iter()
        .map(|c| (c.mu - modes[0]).abs().max((c.mu - modes[modes.len() - 1]).abs()) + c.sigma * 50f64.powf(1f64.max(1.0 / c.nu)))
        .fold(0.0, f64::max);

    let mut total = outward(&f, modes[0], -1.0, reach, first_step);
    total += outward(&f, modes[modes.len() - 1], 1.0, reach, first_step);
    for w in modes.windows(2) {
        let half = 0.5 * (w[1] - w[0]);
        total += outward(&f, w[0], 1.0, half, first_step);
        total += outward(&f, w[1], -1.0, half, first_step);
    }
    total
}

/// Integral of `f` from `start` over `length` in direction `dir`.
fn outward(f: &impl Fn(f64) -> f64, start: f64, dir: f64, length: f64, first_step: f64) -> f64 {
    const PANELS: usize = 200;
    let mut lo = 0.0;
    let mut hi = first_step.min(length);
    let mut total = 0.0;
    while lo < length {
        let h = (hi - lo) / PANELS as f64;
        let mut acc = f(start + dir * lo) + f(start + dir * hi);
        for i in 1..PANELS {
            let weight = if i % 2 == 1 { 4.0 } else { 2.0 };
            acc += weight * f(start + dir * (lo + h * i as f64));
        }
        total += acc * h / 3.0;
        lo = hi;
        hi = (hi * 4.0).min(length);
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constraints::ModelCode;
    use approx::assert_relative_eq;

    fn g(mu: f64, sigma: f64, nu: f64) -> GndParams {
        GndParams::new(mu, sigma, nu).unwrap()
    }

    fn table2_uuu() -> MixtureModel {
        MixtureModel::unconstrained(
            vec![0.4, 0.3, 0.3],
            vec![g(0.0, 0.2, 0.5), g(10.0, 1.5, 1.6), g(20.0, 3.0, 4.0)],
        )
        .unwrap()
    }

    #[test]
    fn single_point_log_likelihood() {
        let m = MixtureModel::unconstrained(vec![1.0], vec![g(0.0, 1.0, 2.0)]).unwrap();
        assert_relative_eq!(log_likelihood(&[0.0], &m).unwrap(), -0.572_364_942_924_700_1, max_relative = 1e-13);
        assert!(log_likelihood(&[], &m).is_err());
    }

    #[test]
    fn identical_components_collapse() {
        let one = MixtureModel::unconstrained(vec![1.0], vec![g(1.0, 2.0, 1.3)]).unwrap();
        let two = MixtureModel::unconstrained(vec![0.25, 0.75], vec![g(1.0, 2.0, 1.3); 2]).unwrap();
        let data = [-3.0, -1.0, 1.0, 3.0, 5.0];
        assert_relative_eq!(
            log_likelihood(&data, &one).unwrap(),
            log_likelihood(&data, &two).unwrap(),
            max_relative = 1e-13
        );
        let a = marginal_moments(&one);
        let b = marginal_moments(&two);
        assert_relative_eq!(a.variance, b.variance, max_relative = 1e-12);
        assert_relative_eq!(a.kurtosis, b.kurtosis, max_relative = 1e-12);
    }

    #[test]
    fn midpoint_of_mirror_components_splits_evenly() {
        let m = MixtureModel::unconstrained(vec![0.5, 0.5], vec![g(-2.0, 1.0, 1.5), g(2.0, 1.0, 1.5)]).unwrap();
        let e = responsibilities(&[0.0], &m).unwrap();
        assert_eq!(e.responsibilities.row(0), &[0.5, 0.5]);
    }

    #[test]
    fn dominant_component_takes_responsibility() {
        let m = MixtureModel::unconstrained(vec![0.999_999, 1e-6], vec![g(0.0, 1.0, 2.0), g(30.0, 1.0, 2.0)]).unwrap();
        let e = responsibilities(&[0.0], &m).unwrap();
        assert!((e.responsibilities.get(0, 0) - 1.0).abs() < 1e-6);
    }

    #[test]
    fn responsibilities_match_direct_ratio() {
        let m = table2_uuu();
        let xs = [-0.3, 2.0, 8.5, 12.0, 17.0];
        let e = responsibilities(&xs, &m).unwrap();
        for (n, &x) in xs.iter().enumerate() {
            let dens: Vec<f64> = m
                .weights()
                .iter()
                .zip(m.components())
                .map(|(w, c)| w * crate::gnd::gnd_pdf(x, c).unwrap())
                .collect();
            let total: f64 = dens.iter().sum();
            for k in 0..3 {
                assert!((e.responsibilities.get(n, k) - dens[k] / total).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn underflow_rows_fall_back_to_uniform() {
        let m = MixtureModel::unconstrained(vec![0.5, 0.5], vec![g(0.0, 0.01, 20.0), g(1.0, 0.01, 20.0)]).unwrap();
        let e = responsibilities(&[1e20], &m).unwrap();
        assert_eq!(e.underflow_rows, vec![0]);
        assert_eq!(e.responsibilities.row(0), &[0.5, 0.5]);
    }

    #[test]
    fn table1_parameter_counts() {
        let expect = [("UUU", 7), ("CUU", 6), ("UCU", 6), ("UUC", 6), ("CCU", 5), ("CUC", 5), ("UCC", 5)];
        for (code, p) in expect {
            let spec = code.parse::<ModelCode>().unwrap().to_spec_all(2).unwrap();
            assert_eq!(free_parameter_count(2, &spec).unwrap(), p, "{code}");
        }
        for k in 1..=10 {
            assert_eq!(free_parameter_count(k, &ConstraintSpec::unconstrained(k)).unwrap(), 4 * k - 1);
        }
    }

    #[test]
    fn bic_arithmetic() {
        assert!((bic(-6716.82, 5, 3786) - 13474.83).abs() < 0.02);
        assert!((bic(-6755.81, 5, 3786) - 13552.81).abs() < 0.02);
        assert_eq!(bic(0.0, 0, 1), 0.0);
    }

    #[test]
    fn normal_component_moments() {
        let m = MixtureModel::unconstrained(vec![1.0], vec![g(3.0, 1.0, 2.0)]).unwrap();
        let mm = marginal_moments(&m);
        assert_relative_eq!(mm.mean, 3.0);
        assert_relative_eq!(mm.variance, 0.5, max_relative = 1e-13);
        assert!(mm.skewness.abs() < 1e-14);
        assert_relative_eq!(mm.kurtosis, 3.0, max_relative = 1e-12);
    }

    #[test]
    fn rejects_invalid_models() {
        assert!(MixtureModel::unconstrained(vec![0.5, 0.6], vec![g(0.0, 1.0, 2.0); 2]).is_err());
        assert!(MixtureModel::unconstrained(vec![1.0, 0.0], vec![g(0.0, 1.0, 2.0); 2]).is_err());
        let ccu = "CCU".parse::<ModelCode>().unwrap().to_spec_all(2).unwrap();
        assert!(MixtureModel::new(vec![0.5, 0.5], vec![g(0.0, 1.0, 2.0), g(0.0, 1.1, 1.0)], ccu.clone()).is_err());
        assert!(MixtureModel::new(vec![0.5, 0.5], vec![g(0.0, 1.0, 2.0), g(0.0, 1.0, 1.0)], ccu).is_ok());
    }

    #[test]
    fn json_layout() {
        let spec = "UCU".parse::<ModelCode>().unwrap().to_spec(3, &[1, 2]).unwrap();
        let m = MixtureModel::new(vec![0.4, 0.3, 0.3], vec![g(0.0, 0.2, 0.5), g(10.0, 3.0, 1.6), g(20.0, 3.0, 4.0)], spec)
            .unwrap();
        let v: serde_json::Value = serde_json::to_value(&m).unwrap();
        assert_eq!(v["constraints"]["sigma"], serde_json::json!([[1], [2, 3]]));
        assert_eq!(v["components"][1]["sigma"], serde_json::json!(3.0));
        let back: MixtureModel = serde_json::from_value(v).unwrap();
        assert_eq!(back, m);
    }
}
