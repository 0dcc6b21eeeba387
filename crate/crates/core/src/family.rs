//! Candidate constraint structures and BIC-based selection among them.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::Serialize;

use crate::constraints::{ConstraintSpec, ModelCode, ParamKind};
use crate::ecm::{ecm_fit, FitConfig, FitResult};
use crate::error::{Error, Result};
use crate::mixture::free_parameter_count;

/// Codes in the order of the two-component family table. The fully tied
/// code comes last and is only offered for K > 2, where it still leaves
/// components outside the block free.
const FAMILY_ORDER: [&str; 8] = ["UUU", "CUU", "UCU", "UUC", "CCU", "CUC", "UCC", "CCC"];

/// A candidate model: an optional short code plus its full spec.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Candidate {
    pub code: Option<ModelCode>,
    pub spec: ConstraintSpec,
}

impl Candidate {
    pub fn label(&self) -> String {
        match self.code {
            Some(code) => code.to_string(),
            None => serde_json::to_string(&self.spec).unwrap_or_else(|_| "custom".into()),
        }
    }
}

impl From<ConstraintSpec> for Candidate {
    fn from(spec: ConstraintSpec) -> Self {
        Candidate { code: ModelCode::classify(&spec), spec }
    }
}

/// Enumerates the constrained family on `k` components. Every parameter kind
/// in `palette` may be tied over the zero-based `block`; kinds outside the
/// palette stay free. For K = 2 this is the seven-model table; for larger K
/// all eight combinations are produced.
pub fn enumerate_family(k: usize, palette: &[ParamKind], block: &[usize]) -> Result<Vec<Candidate>> {
    if k < 2 {
        return Err(Error::Input("a constrained family needs K >= 2".into()));
    }
    if block.len() < 2 || block.iter().any(|&i| i >= k) {
        return Err(Error::Input(format!(
            "designated block {:?} is not a subset of 1..={k} with at least two members",
            block.iter().map(|i| i + 1).collect::<Vec<_>>()
        )));
    }
    FAMILY_ORDER
        .iter()
        .take(if k == 2 { 7 } else { 8 })
        .map(|s| s.parse::<ModelCode>().expect("static codes parse"))
        .filter(|code| ParamKind::ALL.iter().all(|&kind| !code.constrained(kind) || palette.contains(&kind)))
        .map(|code| Ok(Candidate { code: Some(code), spec: code.to_spec(k, block)? }))
        .collect()
}

/// The two-component family with every kind constrainable.
pub fn default_family(k: usize) -> Result<Vec<Candidate>> {
    let block: Vec<usize> = (0..k).collect();
    enumerate_family(k, &ParamKind::ALL, &block)
}

/// One candidate's fit and score.
#[derive(Debug, Clone, Serialize)]
pub struct SelectionEntry {
    pub label: String,
    pub candidate: Candidate,
    pub n_params: usize,
    pub log_lik: Option<f64>,
    /// Infinite for failed fits.
    pub bic: f64,
    pub rank: usize,
    pub winner: bool,
    pub error: Option<String>,
    #[serde(skip)]
    pub fit: Option<FitResult>,
}

/// Candidates ranked by BIC, in input order.
#[derive(Debug, Clone, Serialize)]
pub struct SelectionReport {
    pub n_obs: usize,
    pub entries: Vec<SelectionEntry>,
    /// Index into `entries` of the minimal-BIC candidate.
    pub winner: usize,
}

impl SelectionReport {
    pub fn winning_entry(&self) -> &SelectionEntry {
        &self.entries[self.winner]
    }

    /// Plain-text table: one row per candidate, winner marked with `*`.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{:<8} {:>4} {:>14} {:>14} {:>5}  winner", "model", "p", "logL", "BIC", "rank");
        for e in &self.entries {
            let ll = e.log_lik.map_or_else(|| "failed".to_string(), format_sig6);
            let bic = if e.bic.is_finite() { format_sig6(e.bic) } else { "inf".into() };
            let _ = writeln!(
                out,
                "{:<8} {:>4} {:>14} {:>14} {:>5}  {}",
                e.label,
                e.n_params,
                ll,
                bic,
                e.rank,
                if e.winner { "*" } else { "" }
            );
        }
        out
    }
}

/// Formats with six significant digits.
pub fn format_sig6(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    let magnitude = x.abs().log10().floor() as i32;
    let decimals = (5 - magnitude).max(0) as usize;
    format!("{x:.decimals$}")
}

/// Fits every candidate with the same configuration (hence the same starting
/// seeds) and ranks them by ascending BIC. Failed fits rank last.
pub fn select_by_bic(data: &[f64], candidates: &[Candidate], k: usize, cfg: &FitConfig) -> Result<SelectionReport> {
    if candidates.is_empty() {
        return Err(Error::Input("no candidate models".into()));
    }
    let fit_one = |c: &Candidate| ecm_fit(data, k, &c.spec, cfg);
    let fits: Vec<Result<FitResult>> = if cfg.parallel {
        candidates.par_iter().map(fit_one).collect()
    } else {
        candidates.iter().map(fit_one).collect()
    };

    let mut entries = Vec::with_capacity(candidates.len());
    for (c, fit) in candidates.iter().zip(fits) {
        let n_params = free_parameter_count(k, &c.spec)?;
        let entry = match fit {
            Ok(fit) => SelectionEntry {
                label: c.label(),
                candidate: c.clone(),
                n_params,
                log_lik: Some(fit.log_lik),
                bic: fit.bic,
                rank: 0,
                winner: false,
                error: None,
                fit: Some(fit),
            },
            // bad input is the caller's problem, not a failed candidate
            Err(e @ (Error::Input(_) | Error::Config(_))) => return Err(e),
            Err(e) => SelectionEntry {
                label: c.label(),
                candidate: c.clone(),
                n_params,
                log_lik: None,
                bic: f64::INFINITY,
                rank: 0,
                winner: false,
                error: Some(e.to_string()),
                fit: None,
            },
        };
        entries.push(entry);
    }
    if entries.iter().all(|e| e.fit.is_none()) {
        return Err(Error::Selection("every candidate fit failed".into()));
    }
    let mut order: Vec<usize> = (0..entries.len()).collect();
    order.sort_by(|&a, &b| entries[a].bic.total_cmp(&entries[b].bic).then(a.cmp(&b)));
    for (rank, &idx) in order.iter().enumerate() {
        entries[idx].rank = rank + 1;
    }
    let winner = order[0];
    entries[winner].winner = true;
    Ok(SelectionReport { n_obs: data.len(), entries, winner })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_component_family_matches_table() {
        let fam = default_family(2).unwrap();
        let labels: Vec<String> = fam.iter().map(Candidate::label).collect();
        assert_eq!(labels, FAMILY_ORDER[..7]);
        let p: Vec<usize> = fam.iter().map(|c| free_parameter_count(2, &c.spec).unwrap()).collect();
        assert_eq!(p, vec![7, 6, 6, 6, 5, 5, 5]);
    }

    #[test]
    fn three_component_scale_shape_palette() {
        let fam = enumerate_family(3, &[ParamKind::Sigma, ParamKind::Nu], &[1, 2]).unwrap();
        let labels: Vec<String> = fam.iter().map(Candidate::label).collect();
        assert_eq!(labels, ["UUU", "UCU", "UUC", "UCC"]);
        assert_eq!(fam[1].spec.blocks(ParamKind::Sigma), &vec![vec![0], vec![1, 2]]);
    }

    #[test]
    fn three_component_default_palette_has_eight() {
        let fam = enumerate_family(3, &ParamKind::ALL, &[1, 2]).unwrap();
        assert_eq!(fam.len(), 8);
        let p: Vec<usize> = fam.iter().map(|c| free_parameter_count(3, &c.spec).unwrap()).collect();
        assert_eq!(p, vec![11, 10, 10, 10, 9, 9, 9, 8]);
    }

    #[test]
    fn empty_palette_is_unconstrained_only() {
        let fam = enumerate_family(2, &[], &[0, 1]).unwrap();
        assert_eq!(fam.len(), 1);
        assert_eq!(fam[0].spec, ConstraintSpec::unconstrained(2));
    }

    #[test]
    fn block_outside_range_is_rejected() {
        assert!(enumerate_family(3, &ParamKind::ALL, &[1, 3]).is_err());
        assert!(enumerate_family(1, &ParamKind::ALL, &[0]).is_err());
    }

    #[test]
    fn six_significant_digits() {
        assert_eq!(format_sig6(13474.83), "13474.8");
        assert_eq!(format_sig6(-6716.82), "-6716.82");
        assert_eq!(format_sig6(0.0123456789), "0.0123457");
        assert_eq!(format_sig6(1234567.0), "1234567");
    }
}
