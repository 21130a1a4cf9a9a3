//! Conditional-mean estimators for Gaussian and Gaussian-mixture sources.
//!
//! All estimators are affine in `y` per class. Class likelihoods
//! `p(y | c = k) = N(Φμ_k, σ²I + ΦΣ_kΦᵀ)` are evaluated through a Cholesky
//! factor of the measurement covariance and normalized in log space, so very
//! small noise variances (where raw likelihood ratios overflow) are safe.

mod registry;

use std::f64::consts::PI;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};
use crate::model::{GaussianSource, GmmSource, MeasurementSystem};

pub use registry::{
    ClassifyReconstruct, ConditionalMean, Estimator, EstimatorRegistry, EstimatorStrategy, Lmmse,
};

/// Affine estimator `x̂(y) = offset + gain · y` with
/// `gain = Σ Φᵀ (σ²I + ΦΣΦᵀ)⁻¹` and `offset = μ − gain Φ μ`.
#[derive(Debug, Clone)]
pub struct WienerFilter {
    pub gain: DMatrix<f64>,
    pub offset: DVector<f64>,
    pub class_index: Option<usize>,
}

impl WienerFilter {
    pub fn new(source: &GaussianSource, system: &MeasurementSystem) -> Result<Self> {
        system.check_dim(source.dim())?;
        let phi = system.kernel();
        let b = source.factor();
        let g = phi * &b;
        let chol = measurement_cholesky(&g, system.noise_variance())?;
        // gain = B Gᵀ S⁻¹ = (S⁻¹ G Bᵀ)ᵀ, solved rather than inverted
        let x = chol.solve(&g);
        let gain = &b * x.transpose();
        let offset = source.mean() - &gain * (phi * source.mean());
        Ok(Self {
            gain,
            offset,
            class_index: None,
        })
    }

    pub fn for_class(gmm: &GmmSource, k: usize, system: &MeasurementSystem) -> Result<Self> {
        let mut f = Self::new(gmm.component(k)?, system)?;
        f.class_index = Some(k);
        Ok(f)
    }

    pub fn num_measurements(&self) -> usize {
        self.gain.ncols()
    }

    pub fn apply(&self, y: &DVector<f64>) -> Result<DVector<f64>> {
        check_len(y, self.num_measurements())?;
        Ok(self.apply_unchecked(y))
    }

    pub(crate) fn apply_unchecked(&self, y: &DVector<f64>) -> DVector<f64> {
        &self.offset + &self.gain * y
    }
}

fn check_len(y: &DVector<f64>, expected: usize) -> Result<()> {
    if y.len() != expected {
        return Err(Error::DimensionMismatch {
            what: "measurement vector length",
            expected,
            got: y.len(),
        });
    }
    Ok(())
}

/// Cholesky factor of `σ²I + G Gᵀ`.
fn measurement_cholesky(g: &DMatrix<f64>, noise_variance: f64) -> Result<Cholesky<f64, Dyn>> {
    let l = g.nrows();
    let mut s = g * g.transpose();
    s = (&s + s.transpose()) * 0.5;
    for i in 0..l {
        s[(i, i)] += noise_variance;
    }
    Cholesky::new(s).ok_or_else(|| {
        Error::Numerical("measurement covariance lost positive definiteness".into())
    })
}

pub fn wiener_filter(source: &GaussianSource, system: &MeasurementSystem) -> Result<WienerFilter> {
    WienerFilter::new(source, system)
}

pub fn gaussian_estimate(filter: &WienerFilter, y: &DVector<f64>) -> Result<DVector<f64>> {
    filter.apply(y)
}

/// Posterior class probabilities and the unnormalized log scores
/// `log p(y | c = k) + log p_k`.
#[derive(Debug, Clone)]
pub struct ClassPosterior {
    pub probabilities: Vec<f64>,
    pub log_likelihoods: Vec<f64>,
}

impl ClassPosterior {
    /// Normalizes with log-sum-exp; `-inf` scores get probability zero.
    pub fn from_log_scores(log_likelihoods: Vec<f64>) -> Self {
        let max = log_likelihoods
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max);
        let unnorm: Vec<f64> = log_likelihoods
            .iter()
            .map(|&l| if l == f64::NEG_INFINITY { 0.0 } else { (l - max).exp() })
            .collect();
        let total: f64 = unnorm.iter().sum();
        let probabilities = unnorm.iter().map(|u| u / total).collect();
        Self {
            probabilities,
            log_likelihoods,
        }
    }

    /// MAP index; ties go to the smallest index.
    pub fn map_class(&self) -> usize {
        let mut best = 0;
        for (k, &l) in self.log_likelihoods.iter().enumerate() {
            if l > self.log_likelihoods[best] {
                best = k;
            }
        }
        best
    }
}

#[derive(Debug, Clone)]
struct ClassLikelihood {
    predicted: DVector<f64>,
    chol: Cholesky<f64, Dyn>,
    log_const: f64,
}

impl ClassLikelihood {
    fn new(source: &GaussianSource, system: &MeasurementSystem, weight: f64) -> Result<Self> {
        let phi = system.kernel();
        let g = phi * source.factor();
        let chol = measurement_cholesky(&g, system.noise_variance())?;
        let l = phi.nrows() as f64;
        let log_det: f64 = 2.0 * chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>();
        let log_const = weight.ln() - 0.5 * log_det - 0.5 * l * (2.0 * PI).ln();
        Ok(Self {
            predicted: phi * source.mean(),
            chol,
            log_const,
        })
    }

    fn log_score(&self, y: &DVector<f64>) -> f64 {
        if self.log_const == f64::NEG_INFINITY {
            return f64::NEG_INFINITY;
        }
        let mut r = y - &self.predicted;
        self.chol.l_dirty().solve_lower_triangular_mut(&mut r);
        self.log_const - 0.5 * r.norm_squared()
    }
}

/// Per-class likelihoods and Wiener filters for one (mixture, system) pair.
///
/// Built once and then applied to many measurement vectors.
#[derive(Debug, Clone)]
pub struct MixtureDecoder {
    classes: Vec<ClassLikelihood>,
    filters: Vec<WienerFilter>,
    num_measurements: usize,
}

impl MixtureDecoder {
    pub fn new(gmm: &GmmSource, system: &MeasurementSystem) -> Result<Self> {
        system.check_dim(gmm.dim())?;
        let mut classes = Vec::with_capacity(gmm.num_classes());
        let mut filters = Vec::with_capacity(gmm.num_classes());
        for (k, (src, &w)) in gmm.components().iter().zip(gmm.weights()).enumerate() {
            classes.push(ClassLikelihood::new(src, system, w)?);
            let mut f = WienerFilter::new(src, system)?;
            f.class_index = Some(k);
            filters.push(f);
        }
        Ok(Self {
            classes,
            filters,
            num_measurements: system.num_measurements(),
        })
    }

    pub fn filters(&self) -> &[WienerFilter] {
        &self.filters
    }

    pub fn posterior(&self, y: &DVector<f64>) -> Result<ClassPosterior> {
        check_len(y, self.num_measurements)?;
        Ok(self.posterior_unchecked(y))
    }

    pub(crate) fn posterior_unchecked(&self, y: &DVector<f64>) -> ClassPosterior {
        ClassPosterior::from_log_scores(self.classes.iter().map(|c| c.log_score(y)).collect())
    }

    pub(crate) fn classify_reconstruct_unchecked(&self, y: &DVector<f64>) -> DVector<f64> {
        let k = self.posterior_unchecked(y).map_class();
        self.filters[k].apply_unchecked(y)
    }

    pub(crate) fn conditional_mean_unchecked(&self, y: &DVector<f64>) -> DVector<f64> {
        let post = self.posterior_unchecked(y);
        let n = self.filters[0].offset.len();
        let mut out = DVector::zeros(n);
        for (p, f) in post.probabilities.iter().zip(&self.filters) {
            if *p > 0.0 {
                out += f.apply_unchecked(y) * *p;
            }
        }
        out
    }

    pub fn classify_reconstruct(&self, y: &DVector<f64>) -> Result<DVector<f64>> {
        check_len(y, self.num_measurements)?;
        Ok(self.classify_reconstruct_unchecked(y))
    }

    pub fn conditional_mean(&self, y: &DVector<f64>) -> Result<DVector<f64>> {
        check_len(y, self.num_measurements)?;
        Ok(self.conditional_mean_unchecked(y))
    }
}

pub fn class_posteriors(
    gmm: &GmmSource,
    system: &MeasurementSystem,
    y: &DVector<f64>,
) -> Result<ClassPosterior> {
    MixtureDecoder::new(gmm, system)?.posterior(y)
}

pub fn map_classify(gmm: &GmmSource, system: &MeasurementSystem, y: &DVector<f64>) -> Result<usize> {
    Ok(class_posteriors(gmm, system, y)?.map_class())
}

/// MAP class, then that class's Wiener estimate.
pub fn classify_reconstruct(
    gmm: &GmmSource,
    system: &MeasurementSystem,
    y: &DVector<f64>,
) -> Result<DVector<f64>> {
    MixtureDecoder::new(gmm, system)?.classify_reconstruct(y)
}

/// Exact `E[x | y]`: posterior-weighted class Wiener estimates.
pub fn gmm_conditional_mean(
    gmm: &GmmSource,
    system: &MeasurementSystem,
    y: &DVector<f64>,
) -> Result<DVector<f64>> {
    MixtureDecoder::new(gmm, system)?.conditional_mean(y)
}

/// Overall mean and covariance of the mixture.
pub fn gmm_moments(gmm: &GmmSource) -> (DVector<f64>, DMatrix<f64>) {
    let n = gmm.dim();
    let mut mean = DVector::zeros(n);
    for (p, c) in gmm.weights().iter().zip(gmm.components()) {
        mean += c.mean() * *p;
    }
    let mut cov = DMatrix::zeros(n, n);
    for (p, c) in gmm.weights().iter().zip(gmm.components()) {
        let d = c.mean() - &mean;
        cov += (c.covariance() + &d * d.transpose()) * *p;
    }
    (mean, crate::model::linalg::symmetrize(&cov))
}

/// The mixture collapsed to a single Gaussian with matching first two moments.
pub fn moment_matched_gaussian(gmm: &GmmSource) -> Result<GaussianSource> {
    let (mean, cov) = gmm_moments(gmm);
    GaussianSource::new(mean, cov)
}

/// Best affine estimator: the Wiener filter of the moment-matched Gaussian.
pub fn lmmse_estimate(
    gmm: &GmmSource,
    system: &MeasurementSystem,
    y: &DVector<f64>,
) -> Result<DVector<f64>> {
    WienerFilter::new(&moment_matched_gaussian(gmm)?, system)?.apply(y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{random_kernel, sample_gmm, sample_wishart};
    use crate::rng::rng_from_seed;
    use approx::assert_abs_diff_eq;

    fn scalar(v: f64) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, v)
    }

    #[test]
    fn identity_wiener_gain_is_half() {
        let src = GaussianSource::zero_mean(DMatrix::identity(2, 2)).unwrap();
        let sys = MeasurementSystem::new(DMatrix::identity(2, 2), 1.0).unwrap();
        let f = wiener_filter(&src, &sys).unwrap();
        assert!((f.gain - DMatrix::identity(2, 2) * 0.5).amax() < 1e-15);
    }

    #[test]
    fn deterministic_source_returns_mean() {
        let mu = DVector::from_vec(vec![1.0, -1.0]);
        let src = GaussianSource::new(mu.clone(), DMatrix::zeros(2, 2)).unwrap();
        let sys = MeasurementSystem::new(DMatrix::identity(2, 2), 1.0).unwrap();
        let f = wiener_filter(&src, &sys).unwrap();
        assert_eq!(f.gain.amax(), 0.0);
        let y = DVector::from_vec(vec![10.0, 20.0]);
        assert_eq!(gaussian_estimate(&f, &y).unwrap(), mu);
    }

    #[test]
    fn noiseless_mean_maps_to_mean() {
        let mut rng = rng_from_seed(7);
        let mu = DVector::from_vec(vec![0.3, -1.2, 2.0, 0.1]);
        let src = GaussianSource::new(mu.clone(), sample_wishart(4, 3, &mut rng)).unwrap();
        let sys = MeasurementSystem::new(random_kernel(3, 4, &mut rng), 0.2).unwrap();
        let f = wiener_filter(&src, &sys).unwrap();
        let y = sys.kernel() * &mu;
        assert!((f.apply(&y).unwrap() - mu).norm() < 1e-9);
    }

    #[test]
    fn near_noiseless_square_inversion() {
        let mut rng = rng_from_seed(19);
        let src = GaussianSource::zero_mean(sample_wishart(4, 6, &mut rng)).unwrap();
        let sys = MeasurementSystem::new(random_kernel(4, 4, &mut rng), 1e-12).unwrap();
        let f = wiener_filter(&src, &sys).unwrap();
        for _ in 0..20 {
            let x = crate::model::sample_gaussian(&src, 1, &mut rng).column(0).into_owned();
            let xh = f.apply(&(sys.kernel() * &x)).unwrap();
            assert!((xh - &x).norm() < 1e-4 * x.norm());
        }
    }

    #[test]
    fn estimate_matches_direct_formula() {
        let mut rng = rng_from_seed(23);
        let mu = DVector::from_vec(vec![1.0, 2.0, 3.0, 4.0, 5.0]);
        let src = GaussianSource::new(mu.clone(), sample_wishart(5, 5, &mut rng)).unwrap();
        let phi = random_kernel(3, 5, &mut rng);
        let sys = MeasurementSystem::new(phi.clone(), 0.3).unwrap();
        let y = DVector::from_vec(vec![0.5, -0.2, 1.7]);
        let cov = src.covariance();
        let s = &phi * cov * phi.transpose() + DMatrix::identity(3, 3) * 0.3;
        let direct = &mu + cov * phi.transpose() * s.try_inverse().unwrap() * (&y - &phi * &mu);
        let got = wiener_filter(&src, &sys).unwrap().apply(&y).unwrap();
        assert!((got - direct).amax() < 1e-12 * (1.0 + mu.amax()));
    }

    #[test]
    fn dimension_mismatch_reported() {
        let src = GaussianSource::zero_mean(DMatrix::identity(3, 3)).unwrap();
        let sys = MeasurementSystem::new(DMatrix::identity(2, 2), 1.0).unwrap();
        assert!(wiener_filter(&src, &sys).is_err());
        let sys = MeasurementSystem::new(DMatrix::identity(2, 3), 1.0).unwrap();
        let f = wiener_filter(&src, &sys).unwrap();
        assert!(f.apply(&DVector::zeros(3)).is_err());
    }

    fn scalar_pair(weights: Vec<f64>) -> (GmmSource, MeasurementSystem) {
        let a = GaussianSource::zero_mean(scalar(0.0)).unwrap();
        let b = GaussianSource::zero_mean(scalar(3.0)).unwrap();
        let gmm = GmmSource::new(weights, vec![a, b]).unwrap();
        (gmm, MeasurementSystem::new(scalar(1.0), 1.0).unwrap())
    }

    #[test]
    fn scalar_posterior_hand_value() {
        // N(0,1) vs N(0,4) at y = 0: densities 1/√(2π) and 1/√(8π)
        let (gmm, sys) = scalar_pair(vec![0.5, 0.5]);
        let y = DVector::from_element(1, 0.0);
        let p = class_posteriors(&gmm, &sys, &y).unwrap();
        let d1 = 1.0 / (2.0 * PI).sqrt();
        let d2 = 1.0 / (8.0 * PI).sqrt();
        assert_abs_diff_eq!(p.probabilities[0], d1 / (d1 + d2), epsilon = 1e-14);
        assert_abs_diff_eq!(p.probabilities[0], 2.0 / 3.0, epsilon = 1e-14);
        assert_eq!(map_classify(&gmm, &sys, &y).unwrap(), 0);
    }

    #[test]
    fn single_class_posterior_is_one() {
        let src = GaussianSource::zero_mean(DMatrix::identity(2, 2)).unwrap();
        let gmm = GmmSource::single(src);
        let sys = MeasurementSystem::new(DMatrix::identity(2, 2), 0.1).unwrap();
        let p = class_posteriors(&gmm, &sys, &DVector::from_vec(vec![3.0, -4.0])).unwrap();
        assert_eq!(p.probabilities, vec![1.0]);
    }

    #[test]
    fn identical_components_keep_prior() {
        let mut rng = rng_from_seed(2);
        let src = GaussianSource::zero_mean(sample_wishart(3, 2, &mut rng)).unwrap();
        let gmm = GmmSource::new(vec![0.3, 0.7], vec![src.clone(), src.clone()]).unwrap();
        let sys = MeasurementSystem::new(random_kernel(2, 3, &mut rng), 0.01).unwrap();
        let single = wiener_filter(&src, &sys).unwrap();
        for _ in 0..20 {
            let y = crate::model::sampling::draw_noise(2, 3.0, &mut rng);
            let p = class_posteriors(&gmm, &sys, &y).unwrap();
            assert_abs_diff_eq!(p.probabilities[0], 0.3, epsilon = 1e-12);
            assert_abs_diff_eq!(p.probabilities[1], 0.7, epsilon = 1e-12);
            let cm = gmm_conditional_mean(&gmm, &sys, &y).unwrap();
            assert!((cm - single.apply(&y).unwrap()).amax() < 1e-12);
        }
    }

    #[test]
    fn zero_weight_class_never_selected() {
        let (gmm, sys) = scalar_pair(vec![1.0, 0.0]);
        for y in [-100.0, -1.0, 0.0, 2.0, 50.0] {
            let y = DVector::from_element(1, y);
            let p = class_posteriors(&gmm, &sys, &y).unwrap();
            assert_eq!(p.map_class(), 0);
            assert_eq!(p.probabilities[1], 0.0);
        }
    }

    #[test]
    fn separated_means_classified_by_proximity() {
        let a = GaussianSource::new(DVector::from_vec(vec![0.0, 0.0]), DMatrix::identity(2, 2) * 0.1).unwrap();
        let b = GaussianSource::new(DVector::from_vec(vec![5.0, 5.0]), DMatrix::identity(2, 2) * 0.1).unwrap();
        let gmm = GmmSource::new(vec![0.5, 0.5], vec![a, b]).unwrap();
        let sys = MeasurementSystem::new(DMatrix::from_row_slice(1, 2, &[1.0, 0.5]), 1e-8).unwrap();
        let y = sys.kernel() * DVector::from_vec(vec![5.0, 5.0]);
        assert_eq!(map_classify(&gmm, &sys, &y).unwrap(), 1);
    }

    #[test]
    fn classify_reconstruct_single_class_matches_wiener() {
        let mut rng = rng_from_seed(31);
        let src = GaussianSource::new(DVector::from_element(4, 1.0), sample_wishart(4, 3, &mut rng)).unwrap();
        let gmm = GmmSource::single(src.clone());
        let sys = MeasurementSystem::new(random_kernel(2, 4, &mut rng), 0.05).unwrap();
        let y = DVector::from_vec(vec![0.4, -0.9]);
        let f = wiener_filter(&src, &sys).unwrap().apply(&y).unwrap();
        assert_eq!(classify_reconstruct(&gmm, &sys, &y).unwrap(), f);
        assert!((gmm_conditional_mean(&gmm, &sys, &y).unwrap() - &f).amax() < 1e-15);
        assert!((lmmse_estimate(&gmm, &sys, &y).unwrap() - &f).amax() < 1e-12);
    }

    #[test]
    fn classify_reconstruct_lies_in_class_affine_span() {
        let mut rng = rng_from_seed(37);
        let a = GaussianSource::new(DVector::from_element(4, 1.0), sample_wishart(4, 2, &mut rng)).unwrap();
        let b = GaussianSource::new(DVector::from_element(4, -1.0), sample_wishart(4, 2, &mut rng)).unwrap();
        let gmm = GmmSource::new(vec![0.5, 0.5], vec![a, b]).unwrap();
        let sys = MeasurementSystem::new(random_kernel(3, 4, &mut rng), 1e-3).unwrap();
        let decoder = MixtureDecoder::new(&gmm, &sys).unwrap();
        for _ in 0..100 {
            let y = crate::model::sampling::draw_noise(3, 2.0, &mut rng);
            let c = decoder.posterior(&y).unwrap().map_class();
            let xh = decoder.classify_reconstruct(&y).unwrap();
            let comp = &gmm.components()[c];
            let basis = comp.image_basis();
            let d = xh - comp.mean();
            let residual = &d - &basis * (basis.transpose() * &d);
            assert!(residual.norm() < 1e-8);
        }
    }

    #[test]
    fn moments_of_point_masses() {
        let e1 = DVector::from_vec(vec![1.0, 0.0]);
        let a = GaussianSource::new(e1.clone(), DMatrix::zeros(2, 2)).unwrap();
        let b = GaussianSource::new(-e1.clone(), DMatrix::zeros(2, 2)).unwrap();
        let gmm = GmmSource::new(vec![0.5, 0.5], vec![a, b]).unwrap();
        let (m, c) = gmm_moments(&gmm);
        assert_eq!(m, DVector::zeros(2));
        assert!((c - &e1 * e1.transpose()).amax() < 1e-15);
    }

    #[test]
    fn moments_match_samples() {
        let mut rng = rng_from_seed(41);
        let a = GaussianSource::new(DVector::from_vec(vec![1.0, 0.0, -1.0]), sample_wishart(3, 2, &mut rng)).unwrap();
        let b = GaussianSource::new(DVector::from_vec(vec![0.0, 2.0, 0.5]), sample_wishart(3, 3, &mut rng)).unwrap();
        let gmm = GmmSource::new(vec![0.4, 0.6], vec![a, b]).unwrap();
        let (mean, _) = gmm_moments(&gmm);
        let count = 100_000;
        let (_, xs) = sample_gmm(&gmm, count, &mut rng);
        for i in 0..3 {
            let row: Vec<f64> = xs.row(i).iter().copied().collect();
            let m = row.iter().sum::<f64>() / count as f64;
            let var = row.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (count as f64 - 1.0);
            assert!((m - mean[i]).abs() < 3.0 * (var / count as f64).sqrt());
        }
    }

    #[test]
    fn zero_covariance_zero_mean_lmmse_is_zero() {
        let a = GaussianSource::zero_mean(DMatrix::zeros(3, 3)).unwrap();
        let gmm = GmmSource::new(vec![0.5, 0.5], vec![a.clone(), a]).unwrap();
        let sys = MeasurementSystem::new(DMatrix::identity(2, 3), 1.0).unwrap();
        let y = DVector::from_vec(vec![3.0, 4.0]);
        assert_eq!(lmmse_estimate(&gmm, &sys, &y).unwrap(), DVector::zeros(3));
    }
}
