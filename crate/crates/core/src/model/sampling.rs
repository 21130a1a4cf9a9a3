//! Random generators. Every sampler takes an explicit generator so callers
//! control seeding.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use super::{GaussianSource, GmmSource};

fn normal_matrix<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> DMatrix<f64> {
    // column-major fill order, fixed so seeds reproduce across platforms
    DMatrix::from_fn(rows, cols, |_, _| rng.sample::<f64, _>(StandardNormal))
}

/// i.i.d. standard normal `ℓ×n` kernel rescaled so that `tr(ΦΦᵀ) = ℓ`.
pub fn random_kernel<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> DMatrix<f64> {
    assert!(rows >= 1 && cols >= 1, "kernel must be at least 1x1");
    let mut phi = normal_matrix(rows, cols, rng);
    let power = phi.norm_squared();
    phi *= (rows as f64 / power).sqrt();
    phi
}

/// `G Gᵀ` with `G` a `dim×dof` standard normal matrix (central Wishart, identity scale).
pub fn sample_wishart<R: Rng + ?Sized>(dim: usize, dof: usize, rng: &mut R) -> DMatrix<f64> {
    assert!(dim >= 1 && dof >= 1, "wishart needs dim >= 1 and dof >= 1");
    let g = normal_matrix(dim, dof, rng);
    &g * g.transpose()
}

/// One draw `μ + U_s diag(√λ) z` with `z ~ N(0, I_s)`.
pub fn draw_gaussian<R: Rng + ?Sized>(
    source: &GaussianSource,
    factor: &DMatrix<f64>,
    rng: &mut R,
) -> DVector<f64> {
    let z = DVector::from_fn(factor.ncols(), |_, _| rng.sample::<f64, _>(StandardNormal));
    source.mean() + factor * z
}

/// `count` independent draws as the columns of an `n×count` matrix.
pub fn sample_gaussian<R: Rng + ?Sized>(
    source: &GaussianSource,
    count: usize,
    rng: &mut R,
) -> DMatrix<f64> {
    let factor = source.factor();
    let mut out = DMatrix::zeros(source.dim(), count);
    for j in 0..count {
        out.set_column(j, &draw_gaussian(source, &factor, rng));
    }
    out
}

/// Inverse-CDF draw from a probability vector.
pub fn draw_class<R: Rng + ?Sized>(weights: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (k, &w) in weights.iter().enumerate() {
        if w > 0.0 {
            last_positive = k;
            acc += w;
            if u < acc {
                return k;
            }
        }
    }
    last_positive
}

/// Labels i.i.d. from the mixture weights, samples from the labelled component.
pub fn sample_gmm<R: Rng + ?Sized>(
    gmm: &GmmSource,
    count: usize,
    rng: &mut R,
) -> (Vec<usize>, DMatrix<f64>) {
    let factors: Vec<_> = gmm.components().iter().map(|c| c.factor()).collect();
    let mut labels = Vec::with_capacity(count);
    let mut out = DMatrix::zeros(gmm.dim(), count);
    for j in 0..count {
        let k = draw_class(gmm.weights(), rng);
        out.set_column(j, &draw_gaussian(&gmm.components()[k], &factors[k], rng));
        labels.push(k);
    }
    (labels, out)
}

/// Standard normal vector of length `len` scaled by `std_dev`.
pub fn draw_noise<R: Rng + ?Sized>(len: usize, std_dev: f64, rng: &mut R) -> DVector<f64> {
    DVector::from_fn(len, |_, _| std_dev * rng.sample::<f64, _>(StandardNormal))
}
