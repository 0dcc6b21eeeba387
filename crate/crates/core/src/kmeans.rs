//! One-dimensional k-means (k-means++ seeding, Lloyd iterations) used to
//! build starting points for the fitter.

use std::f64::consts::LN_2;

use rand::Rng;

use crate::constraints::{ConstraintSpec, ParamKind};
use crate::ecm::{block_mean, Diagnostic, FitConfig};
use crate::error::{Error, Result};
use crate::gnd::GndParams;
use crate::mixture::{param_mut, MixtureModel};

const MAX_RESEEDS: usize = 10;
const MAX_LLOYD_ITERS: usize = 100;

/// Starting model plus any seeding events worth reporting.
#[derive(Debug, Clone)]
pub struct KmeansInit {
    pub model: MixtureModel,
    pub diagnostics: Vec<Diagnostic>,
}

pub(crate) fn count_distinct(data: &[f64]) -> usize {
    let mut sorted = data.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted.dedup();
    sorted.len()
}

fn plus_plus_seeds<R: Rng + ?Sized>(data: &[f64], k: usize, rng: &mut R) -> Vec<f64> {
    let mut centers = Vec::with_capacity(k);
    centers.push(data[rng.random_range(0..data.len())]);
    let mut dist: Vec<f64> = data.iter().map(|x| (x - centers[0]).powi(2)).collect();
    while centers.len() < k {
        let total: f64 = dist.iter().sum();
        let next = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut pick = data.len() - 1;
            for (i, d) in dist.iter().enumerate() {
                if target < *d {
                    pick = i;
                    break;
                }
                target -= d;
            }
            data[pick]
        } else {
            data[rng.random_range(0..data.len())]
        };
        centers.push(next);
        for (d, x) in dist.iter_mut().zip(data) {
            *d = d.min((x - next).powi(2));
        }
    }
    centers
}

fn nearest(centers: &[f64], x: f64) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (j, c) in centers.iter().enumerate() {
        let d = (x - c).abs();
        if d < best_d {
            best_d = d;
            best = j;
        }
    }
    best
}

/// Lloyd iterations; returns the labels and the cluster sizes.
fn lloyd(data: &[f64], centers: &mut [f64]) -> (Vec<usize>, Vec<usize>) {
    let k = centers.len();
    let mut labels: Vec<usize> = data.iter().map(|&x| nearest(centers, x)).collect();
    for _ in 0..MAX_LLOYD_ITERS {
        let mut sums = vec![0.0; k];
        let mut counts = vec![0usize; k];
        for (&x, &l) in data.iter().zip(&labels) {
            sums[l] += x;
            counts[l] += 1;
        }
        for j in 0..k {
            if counts[j] > 0 {
                centers[j] = sums[j] / counts[j] as f64;
            }
        }
        let next: Vec<usize> = data.iter().map(|&x| nearest(centers, x)).collect();
        if next == labels {
            break;
        }
        labels = next;
    }
    let mut counts = vec![0usize; k];
    for &l in &labels {
        counts[l] += 1;
    }
    (labels, counts)
}

/// Moves the point farthest from its centroid in the largest cluster into
/// each empty cluster.
fn split_largest(data: &[f64], labels: &mut [usize], counts: &mut [usize], diagnostics: &mut Vec<Diagnostic>) {
    while let Some(empty) = counts.iter().position(|&c| c == 0) {
        let largest = (0..counts.len()).max_by_key(|&j| counts[j]).expect("k >= 1");
        let members: Vec<usize> = (0..data.len()).filter(|&i| labels[i] == largest).collect();
        let centroid = members.iter().map(|&i| data[i]).sum::<f64>() / members.len() as f64;
        let far = *members
            .iter()
            .max_by(|&&a, &&b| (data[a] - centroid).abs().total_cmp(&(data[b] - centroid).abs()))
            .expect("largest cluster is nonempty");
        labels[far] = empty;
        counts[largest] -= 1;
        counts[empty] += 1;
        diagnostics.push(Diagnostic::KmeansSplit { component: empty });
    }
}

/// Components left identical by the block averaging (shared location and
/// scale) would receive identical responsibilities forever. Their shape
/// blocks get distinct starting values `2 exp(u)`, `u ~ U(-ln 2, ln 2)`,
/// sorted ascending.
fn spread_identical_shapes<R: Rng + ?Sized>(comps: &mut [GndParams], spec: &ConstraintSpec, rng: &mut R) {
    let nu_blocks = spec.blocks(ParamKind::Nu);
    let block_of = |j: usize| nu_blocks.iter().position(|b| b.contains(&j)).expect("partition covers every component");
    let mut seen = vec![false; comps.len()];
    for i in 0..comps.len() {
        if seen[i] {
            continue;
        }
        let group: Vec<usize> = (i..comps.len()).filter(|&j| comps[j] == comps[i]).collect();
        let mut blocks: Vec<usize> = group.iter().map(|&j| block_of(j)).collect();
        blocks.sort_unstable();
        blocks.dedup();
        group.iter().for_each(|&j| seen[j] = true);
        if blocks.len() < 2 {
            continue;
        }
        let mut shapes: Vec<f64> = blocks.iter().map(|_| 2.0 * rng.random_range(-LN_2..LN_2).exp()).collect();
        shapes.sort_by(f64::total_cmp);
        for (b, nu) in blocks.iter().zip(shapes) {
            for &j in &nu_blocks[*b] {
                comps[j].nu = nu;
            }
        }
    }
}

/// Builds a starting mixture: cluster means, standard deviations (floored at
/// `10 * sigma_min`) and proportions, shape 2 (or `cfg.fixed_nu`), then
/// averages parameters inside every constrained block. Clusters are numbered
/// by ascending mean before the blocks are applied.
pub fn kmeans_init<R: Rng + ?Sized>(
    data: &[f64],
    k: usize,
    spec: &ConstraintSpec,
    cfg: &FitConfig,
    rng: &mut R,
) -> Result<KmeansInit> {
    if k == 0 || spec.k() != k {
        return Err(Error::Input(format!("cannot initialize K = {k} with a K = {} spec", spec.k())));
    }
    if count_distinct(data) < k {
        return Err(Error::Input(format!("need at least K = {k} distinct observations")));
    }
    let mut diagnostics = Vec::new();
    let mut attempt = 0;
    let (mut labels, mut counts) = loop {
        let mut centers = plus_plus_seeds(data, k, rng);
        let (labels, counts) = lloyd(data, &mut centers);
        if counts.iter().all(|&c| c > 0) || attempt == MAX_RESEEDS {
            break (labels, counts);
        }
        attempt += 1;
    };
    if attempt > 0 {
        diagnostics.push(Diagnostic::KmeansReseeded { attempts: attempt });
    }
    split_largest(data, &mut labels, &mut counts, &mut diagnostics);

    let n = data.len() as f64;
    let nu = cfg.fixed_nu.unwrap_or(2.0);
    let sigma_floor = 10.0 * cfg.sigma_min;
    let mut comps = Vec::with_capacity(k);
    let mut weights = Vec::with_capacity(k);
    for j in 0..k {
        let members: Vec<f64> = data.iter().zip(&labels).filter(|(_, &l)| l == j).map(|(x, _)| *x).collect();
        let m = members.len() as f64;
        let mean = members.iter().sum::<f64>() / m;
        let sd = (members.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / m).sqrt();
        comps.push(GndParams { mu: mean, sigma: sd.max(sigma_floor), nu });
        weights.push(m / n);
    }
    // components are labelled in ascending order of location, so a block
    // such as {2, 3} always names the same clusters whatever the seeding
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| comps[a].mu.total_cmp(&comps[b].mu));
    let mut comps: Vec<GndParams> = order.iter().map(|&j| comps[j]).collect();
    let weights: Vec<f64> = order.iter().map(|&j| weights[j]).collect();
    for kind in ParamKind::ALL {
        for block in spec.blocks(kind) {
            let avg = block_mean(&comps, block, kind);
            for &j in block {
                *param_mut(&mut comps[j], kind) = avg;
            }
        }
    }
    if cfg.fixed_nu.is_none() {
        spread_identical_shapes(&mut comps, spec, rng);
    }
    let model = MixtureModel::new(weights, comps, spec.clone())?;
    Ok(KmeansInit { model, diagnostics })
}
