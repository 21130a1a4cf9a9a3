//! Estimators selectable by name.

use nalgebra::DVector;

use super::{moment_matched_gaussian, MixtureDecoder, WienerFilter};
use crate::error::Result;
use crate::model::{GmmSource, MeasurementSystem};
use crate::registry::{Named, Registry};

/// A reconstruction rule bound to one (prior, system) pair.
///
/// `y` must have the system's measurement count; callers validate once
/// up front instead of per sample.
pub trait Estimator: Send + Sync {
    fn estimate(&self, y: &DVector<f64>) -> DVector<f64>;
}

/// Builds an [`Estimator`] from a prior and a measurement system.
pub trait EstimatorStrategy: Named + Send + Sync {
    fn build(&self, gmm: &GmmSource, system: &MeasurementSystem) -> Result<Box<dyn Estimator>>;
}

/// Exact posterior-weighted conditional mean.
pub struct ConditionalMean;

/// MAP class followed by that class's Wiener filter.
pub struct ClassifyReconstruct;

/// Wiener filter of the moment-matched Gaussian.
pub struct Lmmse;

struct MeanDecoder(MixtureDecoder);
struct MapDecoder(MixtureDecoder);
struct Affine(WienerFilter);

impl Estimator for MeanDecoder {
    fn estimate(&self, y: &DVector<f64>) -> DVector<f64> {
        self.0.conditional_mean_unchecked(y)
    }
}

impl Estimator for MapDecoder {
    fn estimate(&self, y: &DVector<f64>) -> DVector<f64> {
        self.0.classify_reconstruct_unchecked(y)
    }
}

impl Estimator for Affine {
    fn estimate(&self, y: &DVector<f64>) -> DVector<f64> {
        self.0.apply_unchecked(y)
    }
}

impl Named for ConditionalMean {
    fn name(&self) -> &'static str {
        "conditional_mean"
    }
}

impl EstimatorStrategy for ConditionalMean {
    fn build(&self, gmm: &GmmSource, system: &MeasurementSystem) -> Result<Box<dyn Estimator>> {
        Ok(Box::new(MeanDecoder(MixtureDecoder::new(gmm, system)?)))
    }
}

impl Named for ClassifyReconstruct {
    fn name(&self) -> &'static str {
        "classify_reconstruct"
    }
}

impl EstimatorStrategy for ClassifyReconstruct {
    fn build(&self, gmm: &GmmSource, system: &MeasurementSystem) -> Result<Box<dyn Estimator>> {
        Ok(Box::new(MapDecoder(MixtureDecoder::new(gmm, system)?)))
    }
}

impl Named for Lmmse {
    fn name(&self) -> &'static str {
        "lmmse"
    }
}

impl EstimatorStrategy for Lmmse {
    fn build(&self, gmm: &GmmSource, system: &MeasurementSystem) -> Result<Box<dyn Estimator>> {
        let collapsed = moment_matched_gaussian(gmm)?;
        Ok(Box::new(Affine(WienerFilter::new(&collapsed, system)?)))
    }
}

pub type EstimatorRegistry = Registry<dyn EstimatorStrategy>;

impl EstimatorRegistry {
    pub fn with_defaults() -> Self {
        let mut r: Self = Registry::new("estimator");
        r.register(Box::new(ConditionalMean));
        r.register(Box::new(ClassifyReconstruct));
        r.register(Box::new(Lmmse));
        r
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimators::{classify_reconstruct, gmm_conditional_mean, lmmse_estimate};
    use crate::model::{random_kernel, sample_wishart, GaussianSource};
    use crate::rng::rng_from_seed;

    #[test]
    fn registered_estimators_match_free_functions() {
        let mut rng = rng_from_seed(3);
        let a = GaussianSource::new(DVector::from_element(4, 0.5), sample_wishart(4, 2, &mut rng)).unwrap();
        let b = GaussianSource::zero_mean(sample_wishart(4, 3, &mut rng)).unwrap();
        let gmm = GmmSource::new(vec![0.4, 0.6], vec![a, b]).unwrap();
        let sys = MeasurementSystem::new(random_kernel(3, 4, &mut rng), 0.05).unwrap();
        let y = DVector::from_vec(vec![0.3, -1.0, 0.8]);
        let reg = EstimatorRegistry::with_defaults();
        assert_eq!(reg.names(), vec!["conditional_mean", "classify_reconstruct", "lmmse"]);
        let cm = reg.get("conditional_mean").unwrap().build(&gmm, &sys).unwrap();
        let cr = reg.get("classify_reconstruct").unwrap().build(&gmm, &sys).unwrap();
        let lm = reg.get("lmmse").unwrap().build(&gmm, &sys).unwrap();
        assert_eq!(cm.estimate(&y), gmm_conditional_mean(&gmm, &sys, &y).unwrap());
        assert_eq!(cr.estimate(&y), classify_reconstruct(&gmm, &sys, &y).unwrap());
        assert_eq!(lm.estimate(&y), lmmse_estimate(&gmm, &sys, &y).unwrap());
        assert!(reg.get("median").is_err());
    }
}
