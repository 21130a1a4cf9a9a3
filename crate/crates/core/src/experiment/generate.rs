//! Synthetic model generation.

use std::str::FromStr;

use crate::error::{Error, Result};
use crate::model::{sample_wishart, GaussianSource, GmmSource};
use crate::rng::rng_from_seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    Gaussian,
    GmmWishart,
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "gaussian" => Ok(ModelKind::Gaussian),
            "gmm_wishart" | "gmm" => Ok(ModelKind::GmmWishart),
            other => Err(Error::invalid(format!(
                "unknown model kind `{other}` (expected gaussian or gmm-wishart)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GenModelSpec {
    pub kind: ModelKind,
    pub n: usize,
    pub classes: usize,
    pub dof: usize,
    pub seed: u64,
}

/// Zero-mean classes with independent Wishart(n, dof) covariances and equal weights.
/// `Gaussian` always produces a single class.
pub fn gen_model(spec: &GenModelSpec) -> Result<GmmSource> {
    if spec.n == 0 || spec.dof == 0 {
        return Err(Error::invalid("n and dof must be at least 1"));
    }
    let classes = match spec.kind {
        ModelKind::Gaussian => 1,
        ModelKind::GmmWishart if spec.classes == 0 => {
            return Err(Error::invalid("a mixture needs at least one class"))
        }
        ModelKind::GmmWishart => spec.classes,
    };
    let mut rng = rng_from_seed(spec.seed);
    let components = (0..classes)
        .map(|_| GaussianSource::zero_mean(sample_wishart(spec.n, spec.dof, &mut rng)))
        .collect::<Result<Vec<_>>>()?;
    GmmSource::new(vec![1.0 / classes as f64; classes], components)
}
