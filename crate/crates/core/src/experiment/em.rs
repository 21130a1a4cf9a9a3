//! Plain EM for a full-covariance Gaussian mixture, followed by covariance
//! truncation to a target rank.

use std::f64::consts::PI;
use std::path::Path;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;

use super::image::{extract_patches, read_pgm, truncate_covariance};
use super::table::read_numeric_rows;
use crate::error::{Error, Result};
use crate::model::linalg::symmetrize;
use crate::model::{GaussianSource, GmmSource};
use crate::rng::{rng_from_seed, SimRng};

/// Added to every covariance in each M-step.
pub const RIDGE: f64 = 1e-6;
const LLOYD_ROUNDS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmSpec {
    pub classes: usize,
    pub s_max: usize,
    pub iterations: usize,
    pub seed: u64,
    /// Stop once the per-sample log-likelihood gain drops below this.
    pub tolerance: f64,
}

#[derive(Debug, Clone)]
pub struct EmFit {
    /// Final mixture with covariances truncated to `s_max`.
    pub model: GmmSource,
    /// Total log-likelihood evaluated before each M-step.
    pub log_likelihood: Vec<f64>,
}

struct Params {
    weights: Vec<f64>,
    means: Vec<DVector<f64>>,
    covs: Vec<DMatrix<f64>>,
}

/// Columns of `data` are samples.
pub fn fit_em(data: &DMatrix<f64>, spec: &EmSpec) -> Result<EmFit> {
    let (n, count) = data.shape();
    let k = spec.classes;
    if k == 0 {
        return Err(Error::invalid("EM needs at least one class"));
    }
    if k > count {
        return Err(Error::invalid(format!("{k} classes but only {count} samples")));
    }
    if spec.s_max > n {
        return Err(Error::invalid(format!("s_max = {} exceeds the dimension {n}", spec.s_max)));
    }
    let mut rng = rng_from_seed(spec.seed);
    let labels = kmeans(data, k, &mut rng);
    let mut resp = DMatrix::zeros(count, k);
    for (j, &l) in labels.iter().enumerate() {
        resp[(j, l)] = 1.0;
    }
    let mut params = m_step(data, &resp, None);
    let mut trace = Vec::new();
    for _ in 0..spec.iterations.max(1) {
        let ll = e_step(data, &params, &mut resp)?;
        let converged = trace
            .last()
            .is_some_and(|prev: &f64| (ll - prev) / (count as f64) < spec.tolerance);
        trace.push(ll);
        if converged {
            break;
        }
        params = m_step(data, &resp, Some(&params));
    }
    log::info!("EM finished after {} iterations, log-likelihood {:.6e}", trace.len(), trace.last().unwrap());
    let components = params
        .means
        .into_iter()
        .zip(&params.covs)
        .map(|(m, c)| GaussianSource::new(m, truncate_covariance(c, spec.s_max)?))
        .collect::<Result<Vec<_>>>()?;
    let total: f64 = params.weights.iter().sum();
    let weights = params.weights.iter().map(|w| w / total).collect();
    Ok(EmFit {
        model: GmmSource::new(weights, components)?,
        log_likelihood: trace,
    })
}

/// k-means++ seeding followed by a few Lloyd rounds; returns hard labels.
fn kmeans(data: &DMatrix<f64>, k: usize, rng: &mut SimRng) -> Vec<usize> {
    let count = data.ncols();
    let mut centers: Vec<DVector<f64>> = vec![data.column(rng.random_range(0..count)).into_owned()];
    let mut d2: Vec<f64> = (0..count).map(|j| (data.column(j) - &centers[0]).norm_squared()).collect();
    while centers.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let u = rng.random::<f64>() * total;
            let mut acc = 0.0;
            d2.iter()
                .position(|d| {
                    acc += d;
                    acc > u
                })
                .unwrap_or(count - 1)
        } else {
            rng.random_range(0..count)
        };
        let c = data.column(pick).into_owned();
        for (j, d) in d2.iter_mut().enumerate() {
            *d = d.min((data.column(j) - &c).norm_squared());
        }
        centers.push(c);
    }
    let mut labels = vec![0; count];
    for _ in 0..LLOYD_ROUNDS {
        for (j, l) in labels.iter_mut().enumerate() {
            let col = data.column(j);
            *l = (0..k)
                .min_by(|&a, &b| {
                    (col - &centers[a]).norm_squared().total_cmp(&(col - &centers[b]).norm_squared())
                })
                .unwrap();
        }
        for (c, center) in centers.iter_mut().enumerate() {
            let members: Vec<usize> = (0..count).filter(|&j| labels[j] == c).collect();
            if !members.is_empty() {
                *center = members.iter().map(|&j| data.column(j).into_owned()).sum::<DVector<f64>>()
                    / members.len() as f64;
            }
        }
    }
    labels
}

/// Weighted moments per class plus [`RIDGE`]; a class with no mass keeps
/// its previous parameters.
fn m_step(data: &DMatrix<f64>, resp: &DMatrix<f64>, previous: Option<&Params>) -> Params {
    let (n, count) = data.shape();
    let k = resp.ncols();
    let mut weights = Vec::with_capacity(k);
    let mut means = Vec::with_capacity(k);
    let mut covs = Vec::with_capacity(k);
    for c in 0..k {
        let r = resp.column(c);
        let nk: f64 = r.sum();
        if nk < 1e-10 {
            let (m, s) = match previous {
                Some(p) => (p.means[c].clone(), p.covs[c].clone()),
                None => (data.column(c % count).into_owned(), DMatrix::identity(n, n) * RIDGE),
            };
            weights.push(0.0);
            means.push(m);
            covs.push(s);
            continue;
        }
        let mean = data * r / nk;
        let mut centered = data.clone();
        for (j, mut col) in centered.column_iter_mut().enumerate() {
            col -= &mean;
            col *= r[j].sqrt();
        }
        let mut cov = symmetrize(&(&centered * centered.transpose() / nk));
        for i in 0..n {
            cov[(i, i)] += RIDGE;
        }
        weights.push(nk / count as f64);
        means.push(mean);
        covs.push(cov);
    }
    Params { weights, means, covs }
}

/// Fills `resp` with posterior class probabilities; returns the log-likelihood.
fn e_step(data: &DMatrix<f64>, params: &Params, resp: &mut DMatrix<f64>) -> Result<f64> {
    let (n, count) = data.shape();
    let k = params.weights.len();
    let mut logp = DMatrix::from_element(count, k, f64::NEG_INFINITY);
    for c in 0..k {
        if params.weights[c] <= 0.0 {
            continue;
        }
        let chol: Cholesky<f64, Dyn> = Cholesky::new(params.covs[c].clone())
            .ok_or_else(|| Error::Numerical("EM covariance lost positive definiteness".into()))?;
        let log_det = 2.0 * chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>();
        let base = params.weights[c].ln() - 0.5 * (log_det + n as f64 * (2.0 * PI).ln());
        let mut centered = data.clone();
        for mut col in centered.column_iter_mut() {
            col -= &params.means[c];
        }
        chol.l_dirty().solve_lower_triangular_mut(&mut centered);
        for j in 0..count {
            logp[(j, c)] = base - 0.5 * centered.column(j).norm_squared();
        }
    }
    let mut total = 0.0;
    for j in 0..count {
        let row = logp.row(j);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = row.iter().map(|l| (l - max).exp()).sum();
        total += max + sum.ln();
        for c in 0..k {
            resp[(j, c)] = (logp[(j, c)] - max).exp() / sum;
        }
    }
    Ok(total)
}

/// Training data from a `.pgm` image (non-overlapping `patch×patch` blocks)
/// or from a CSV file with one sample per row.
pub fn load_patches(path: &Path, patch: usize) -> Result<DMatrix<f64>> {
    let is_pgm = path
        .extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("pgm"));
    if is_pgm {
        return Ok(extract_patches(&read_pgm(path)?, patch)?.0);
    }
    let rows = read_numeric_rows(path)?;
    let Some(first) = rows.first() else {
        return Err(Error::format(path, "no samples"));
    };
    let n = first.len();
    if rows.iter().any(|r| r.len() != n) {
        return Err(Error::format(path, "rows have different lengths"));
    }
    Ok(DMatrix::from_fn(n, rows.len(), |i, j| rows[j][i]))
}
