//! Low-noise expansions `MMSE(σ²) = M∞ + D·σ² + o(σ²)`.

use nalgebra::DMatrix;

use super::mmse::reduced_spectrum;
use crate::error::Result;
use crate::model::{GaussianSource, GmmSource, MeasurementSystem};

/// Relative threshold (against the source trace) below which a floor counts as absent.
pub const FLOOR_REL_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    FloorPresent,
    FloorAbsent,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Expansion {
    pub floor: f64,
    pub slope: f64,
    pub regime: Regime,
}

impl Expansion {
    /// `trace` is the source power the floor is compared against.
    pub fn new(floor: f64, slope: f64, trace: f64) -> Self {
        let floor = floor.max(0.0);
        let slope = slope.max(0.0);
        let regime = if floor < FLOOR_REL_TOL * trace || floor == 0.0 {
            Regime::FloorAbsent
        } else {
            Regime::FloorPresent
        };
        Self {
            floor,
            slope,
            regime,
        }
    }

    pub fn floor_present(&self) -> bool {
        self.regime == Regime::FloorPresent
    }

    /// First-order value `M∞ + D·σ²`.
    pub fn evaluate(&self, noise_variance: f64) -> f64 {
        self.floor + self.slope * noise_variance
    }
}

/// Floor and slope of the Gaussian MMSE under `kernel`.
///
/// The floor sums `uᵀΣxu` over the null eigenvectors of `U_sᵀΣU_s`
/// lifted into `Im(Σx)`; the slope sums `uᵀΣxu / λ` over its positive
/// eigenpairs.
pub fn expansion_gaussian(source: &GaussianSource, kernel: &DMatrix<f64>) -> Result<Expansion> {
    MeasurementSystem::new(kernel.clone(), 1.0)?.check_dim(source.dim())?;
    if source.rank() == 0 {
        return Ok(Expansion::new(0.0, 0.0, 0.0));
    }
    let spec = reduced_spectrum(source, kernel);
    let mut floor = 0.0;
    let mut slope = 0.0;
    for i in 0..spec.values.len() {
        if i < spec.rank {
            slope += spec.energies[i] / spec.values[i];
        } else {
            floor += spec.energies[i];
        }
    }
    Ok(Expansion::new(floor, slope, source.trace()))
}

/// `Σ p_k M∞_k` and `Σ p_k D_k`.
pub fn expansion_lower_bound(gmm: &GmmSource, kernel: &DMatrix<f64>) -> Result<Expansion> {
    let mut floor = 0.0;
    let mut slope = 0.0;
    for (p, c) in gmm.weights().iter().zip(gmm.components()) {
        let e = expansion_gaussian(c, kernel)?;
        floor += p * e.floor;
        slope += p * e.slope;
    }
    Ok(Expansion::new(floor, slope, gmm.weighted_trace()))
}
