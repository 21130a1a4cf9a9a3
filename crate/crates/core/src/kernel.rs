//! Measurement-kernel construction.
//!
//! For a Gaussian source the MMSE-optimal kernel under `tr(ΦΦᵀ) ≤ ℓ`
//! senses the top source eigenvectors with water-filled powers
//! `λ*ᵢ = [η − σ²/λᵢ]⁺`. Kernels for the experiment layer are produced by
//! named [`KernelStrategy`] implementations.

use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::analysis::Expansion;
use crate::error::{Error, Result};
use crate::model::file::load_kernel;
use crate::model::{random_kernel, GaussianSource, GmmSource, MeasurementSystem};
use crate::registry::{Named, Registry};
use crate::rng::{derive_seed, rng_from_seed};

#[derive(Debug, Clone, PartialEq)]
pub struct WaterfillAllocation {
    pub water_level: f64,
    /// Length `ℓ`; entries past `min(s, ℓ)` are zero.
    pub allocations: DVector<f64>,
    pub active_count: usize,
}

/// Exact water-filling by descending active-set enumeration.
///
/// Only the first `m = min(s, ℓ)` modes are eligible. For `a = m, …, 1`
/// the level `η(a) = (ℓ + σ² Σ_{i≤a} 1/λᵢ) / a` is accepted at the first
/// `a` with `η(a) > σ²/λ_a`; `a = 1` always qualifies.
pub fn waterfill(eigenvalues: &[f64], ell: usize, noise_variance: f64) -> Result<WaterfillAllocation> {
    if eigenvalues.is_empty() {
        return Err(Error::invalid("water-filling needs at least one eigenvalue"));
    }
    if ell == 0 {
        return Err(Error::invalid("water-filling needs ℓ ≥ 1"));
    }
    if !(noise_variance > 0.0 && noise_variance.is_finite()) {
        return Err(Error::invalid(format!("noise variance must be positive, got {noise_variance}")));
    }
    if let Some(bad) = eigenvalues.iter().find(|v| !(**v > 0.0 && v.is_finite())) {
        return Err(Error::invalid(format!("eigenvalues must be positive, got {bad}")));
    }
    if eigenvalues.windows(2).any(|w| w[1] > w[0]) {
        return Err(Error::invalid("eigenvalues must be sorted in descending order"));
    }
    let m = eigenvalues.len().min(ell);
    let budget = ell as f64;
    let mut inverse_sums = Vec::with_capacity(m);
    let mut acc = 0.0;
    for v in &eigenvalues[..m] {
        acc += 1.0 / v;
        inverse_sums.push(acc);
    }
    let (active, eta) = (1..=m)
        .rev()
        .map(|a| (a, (budget + noise_variance * inverse_sums[a - 1]) / a as f64))
        .find(|&(a, eta)| eta > noise_variance / eigenvalues[a - 1])
        .expect("a single active mode always satisfies the level condition");
    let mut allocations = DVector::zeros(ell);
    for i in 0..active {
        allocations[i] = (eta - noise_variance / eigenvalues[i]).max(0.0);
    }
    Ok(WaterfillAllocation {
        water_level: eta,
        allocations,
        active_count: active,
    })
}

fn require_signal(source: &GaussianSource) -> Result<()> {
    if source.rank() == 0 {
        return Err(Error::invalid("cannot design a kernel for a source with zero covariance"));
    }
    Ok(())
}

/// `Φ* = [diag(√λ*) 0] Uxᵀ` paired with `σ²`; rows past the active modes are zero.
pub fn design_kernel_gaussian(source: &GaussianSource, ell: usize, noise_variance: f64) -> Result<MeasurementSystem> {
    require_signal(source)?;
    let lambda = source.positive_eigenvalues();
    let alloc = waterfill(lambda.as_slice(), ell, noise_variance)?;
    let u = source.image_basis();
    let mut phi = DMatrix::zeros(ell, source.dim());
    for i in 0..alloc.active_count {
        let row = u.column(i).transpose() * alloc.allocations[i].sqrt();
        phi.set_row(i, &row);
    }
    MeasurementSystem::new(phi, noise_variance)
}

/// `Σ_{i≤ℓ'} λᵢ / (1 + λᵢλ*ᵢ/σ²) + Σ_{i>ℓ'} λᵢ` with `ℓ' = min(s, ℓ)`.
pub fn designed_mmse(source: &GaussianSource, ell: usize, noise_variance: f64) -> Result<f64> {
    if source.rank() == 0 {
        return Ok(0.0);
    }
    let lambda = source.positive_eigenvalues();
    let alloc = waterfill(lambda.as_slice(), ell, noise_variance)?;
    let lp = lambda.len().min(ell);
    let sensed: f64 = (0..lp)
        .map(|i| lambda[i] * noise_variance / (noise_variance + lambda[i] * alloc.allocations[i]))
        .sum();
    let tail: f64 = lambda.iter().skip(lp).sum();
    Ok(sensed + tail)
}

/// Floor `Σ_{i>ℓ'} λᵢ` and slope `ℓ'²/ℓ` of the designed-kernel MMSE.
pub fn expansion_designed(source: &GaussianSource, ell: usize) -> Result<Expansion> {
    if ell == 0 {
        return Err(Error::invalid("ℓ must be at least 1"));
    }
    let lambda = source.positive_eigenvalues();
    let lp = lambda.len().min(ell);
    let floor: f64 = lambda.iter().skip(lp).sum();
    let slope = (lp * lp) as f64 / ell as f64;
    Ok(Expansion::new(floor, slope, source.trace()))
}

/// `Σ p_k MMSE_k(σ², Φ*_k)`: every class measured with its own designed kernel.
pub fn mse_lower_bound_designed(gmm: &GmmSource, ell: usize, noise_variance: f64) -> Result<f64> {
    let mut total = 0.0;
    for (p, c) in gmm.weights().iter().zip(gmm.components()) {
        total += p * designed_mmse(c, ell, noise_variance)?;
    }
    Ok(total)
}

/// `Σ p_k M∞_k^GD` and `Σ p_k D_k^GD`.
pub fn expansion_lower_bound_designed(gmm: &GmmSource, ell: usize) -> Result<Expansion> {
    let mut floor = 0.0;
    let mut slope = 0.0;
    for (p, c) in gmm.weights().iter().zip(gmm.components()) {
        let e = expansion_designed(c, ell)?;
        floor += p * e.floor;
        slope += p * e.slope;
    }
    Ok(Expansion::new(floor, slope, gmm.weighted_trace()))
}

/// A rule producing an `ℓ×n` kernel for a prior.
pub trait KernelStrategy: Named + Send + Sync {
    /// True when the kernel must be rebuilt for every noise level.
    fn noise_dependent(&self) -> bool {
        false
    }

    /// `seed` is the experiment master seed; implementations derive their own streams.
    fn build(&self, gmm: &GmmSource, ell: usize, noise_variance: f64, seed: u64) -> Result<DMatrix<f64>>;
}

/// Trace-normalized i.i.d. Gaussian kernel, one per `(seed, ℓ)`.
pub struct RandomKernel;

/// Water-filling design; defined for single-Gaussian priors only.
pub struct DesignedKernel;

/// A kernel loaded from file, used as is.
pub struct FixedKernel {
    kernel: DMatrix<f64>,
}

impl RandomKernel {
    pub fn seed_for(seed: u64, ell: usize) -> u64 {
        derive_seed(seed, &[0x6b65_726e, ell as u64])
    }
}

impl Named for RandomKernel {
    fn name(&self) -> &'static str {
        "random"
    }
}

impl KernelStrategy for RandomKernel {
    fn build(&self, gmm: &GmmSource, ell: usize, _noise_variance: f64, seed: u64) -> Result<DMatrix<f64>> {
        if ell == 0 {
            return Err(Error::invalid("ℓ must be at least 1"));
        }
        let mut rng = rng_from_seed(Self::seed_for(seed, ell));
        Ok(random_kernel(ell, gmm.dim(), &mut rng))
    }
}

impl Named for DesignedKernel {
    fn name(&self) -> &'static str {
        "designed"
    }
}

impl KernelStrategy for DesignedKernel {
    fn noise_dependent(&self) -> bool {
        true
    }

    fn build(&self, gmm: &GmmSource, ell: usize, noise_variance: f64, _seed: u64) -> Result<DMatrix<f64>> {
        if gmm.num_classes() != 1 {
            return Err(Error::invalid(
                "designed kernels are defined for single-Gaussian models; use lbd for mixtures",
            ));
        }
        Ok(design_kernel_gaussian(&gmm.components()[0], ell, noise_variance)?
            .kernel()
            .clone())
    }
}

impl FixedKernel {
    pub fn new(kernel: DMatrix<f64>) -> Self {
        Self { kernel }
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(Self::new(load_kernel(path)?))
    }

    pub fn kernel(&self) -> &DMatrix<f64> {
        &self.kernel
    }
}

impl Named for FixedKernel {
    fn name(&self) -> &'static str {
        "fixed"
    }
}

impl KernelStrategy for FixedKernel {
    fn build(&self, gmm: &GmmSource, ell: usize, _noise_variance: f64, _seed: u64) -> Result<DMatrix<f64>> {
        if self.kernel.nrows() != ell {
            return Err(Error::DimensionMismatch {
                what: "fixed kernel rows vs ℓ",
                expected: ell,
                got: self.kernel.nrows(),
            });
        }
        if self.kernel.ncols() != gmm.dim() {
            return Err(Error::DimensionMismatch {
                what: "fixed kernel columns vs signal dimension",
                expected: gmm.dim(),
                got: self.kernel.ncols(),
            });
        }
        Ok(self.kernel.clone())
    }
}

pub type KernelRegistry = Registry<dyn KernelStrategy>;

impl KernelRegistry {
    pub fn with_defaults() -> Self {
        let mut r: Self = Registry::new("kernel mode");
        r.register(Box::new(RandomKernel));
        r.register(Box::new(DesignedKernel));
        r
    }

    /// Resolves `random`, `designed` or `fixed:PATH`; a fixed kernel is
    /// loaded and registered under `fixed`.
    pub fn resolve(&mut self, spec: &str) -> Result<&dyn KernelStrategy> {
        if let Some(path) = spec.strip_prefix("fixed:") {
            self.register(Box::new(FixedKernel::load(Path::new(path))?));
            return self.get("fixed");
        }
        self.get(spec)
    }
}
