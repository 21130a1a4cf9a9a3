//! Sources, measurement systems, random generators and subspace predicates.

pub mod file;
pub mod linalg;
pub mod sampling;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
pub use linalg::{eig_psd, matrix_sqrt_psd, numerical_rank, EigenDecomposition, RANK_TOL};
pub use sampling::{random_kernel, sample_gaussian, sample_gmm, sample_wishart};

/// Gaussian source `N(μ, Σ)` with a cached spectral decomposition of `Σ`.
///
/// Eigenvalues below `RANK_TOL · λ_max` are treated as exact zeros by every
/// spectral helper ([`factor`](Self::factor), [`image_basis`](Self::image_basis)),
/// so downstream formulas see `Σ = U diag(λ_1..λ_s, 0..0) Uᵀ` exactly.
#[derive(Debug, Clone)]
pub struct GaussianSource {
    mean: DVector<f64>,
    covariance: DMatrix<f64>,
    eig: EigenDecomposition,
    rank: usize,
}

impl GaussianSource {
    pub fn new(mean: DVector<f64>, covariance: DMatrix<f64>) -> Result<Self> {
        if covariance.nrows() != mean.len() || covariance.ncols() != mean.len() {
            return Err(Error::DimensionMismatch {
                what: "covariance size vs mean length",
                expected: mean.len(),
                got: covariance.nrows(),
            });
        }
        if mean.is_empty() {
            return Err(Error::invalid("source dimension must be at least 1"));
        }
        linalg::check_symmetric(&covariance)?;
        let covariance = linalg::symmetrize(&covariance);
        let eig = eig_psd(&covariance)?;
        let rank = numerical_rank(&eig, RANK_TOL);
        Ok(Self {
            mean,
            covariance,
            eig,
            rank,
        })
    }

    pub fn zero_mean(covariance: DMatrix<f64>) -> Result<Self> {
        let n = covariance.nrows();
        Self::new(DVector::zeros(n), covariance)
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Numerical rank `s` of the covariance.
    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.covariance
    }

    pub fn eig(&self) -> &EigenDecomposition {
        &self.eig
    }

    /// The `s` positive eigenvalues, descending.
    pub fn positive_eigenvalues(&self) -> DVector<f64> {
        self.eig.values.rows(0, self.rank).into_owned()
    }

    /// Orthonormal basis (n×s) of `Im(Σ)`.
    pub fn image_basis(&self) -> DMatrix<f64> {
        self.eig.vectors.columns(0, self.rank).into_owned()
    }

    /// Square-root factor `B = U_s diag(√λ)` (n×s) with `Σ = B Bᵀ`.
    pub fn factor(&self) -> DMatrix<f64> {
        let mut b = self.image_basis();
        for (j, mut col) in b.column_iter_mut().enumerate() {
            col *= self.eig.values[j].sqrt();
        }
        b
    }

    /// `Σ` rebuilt from its rank-`s` spectral form.
    pub fn low_rank_covariance(&self) -> DMatrix<f64> {
        let b = self.factor();
        linalg::symmetrize(&(&b * b.transpose()))
    }

    /// `Σ^{1/2} = U_s diag(√λ) U_sᵀ`.
    pub fn sqrt_covariance(&self) -> DMatrix<f64> {
        let b = self.factor();
        linalg::symmetrize(&(&b * self.image_basis().transpose()))
    }

    pub fn trace(&self) -> f64 {
        self.positive_eigenvalues().sum()
    }
}

/// Weighted mixture of Gaussian sources of equal dimension.
#[derive(Debug, Clone)]
pub struct GmmSource {
    weights: Vec<f64>,
    components: Vec<GaussianSource>,
    s_max: usize,
}

/// Whether the images of two class covariances coincide.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OverlapCase {
    Overlapping,
    NonOverlapping,
}

impl GmmSource {
    /// Weights must be nonnegative and sum to one within `1e-9`; they are
    /// renormalized exactly afterwards.
    pub fn new(weights: Vec<f64>, components: Vec<GaussianSource>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::invalid("a mixture needs at least one component"));
        }
        if weights.len() != components.len() {
            return Err(Error::DimensionMismatch {
                what: "weights vs components",
                expected: components.len(),
                got: weights.len(),
            });
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::invalid("mixture weights must be finite and nonnegative"));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::invalid(format!("mixture weights sum to {total}, not 1")));
        }
        let n = components[0].dim();
        if let Some(bad) = components.iter().find(|c| c.dim() != n) {
            return Err(Error::DimensionMismatch {
                what: "component dimension",
                expected: n,
                got: bad.dim(),
            });
        }
        let weights = weights.iter().map(|w| w / total).collect();
        let s_max = components.iter().map(|c| c.rank()).max().unwrap_or(0);
        Ok(Self {
            weights,
            components,
            s_max,
        })
    }

    pub fn single(source: GaussianSource) -> Self {
        let s_max = source.rank();
        Self {
            weights: vec![1.0],
            components: vec![source],
            s_max,
        }
    }

    pub fn dim(&self) -> usize {
        self.components[0].dim()
    }

    pub fn num_classes(&self) -> usize {
        self.components.len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn components(&self) -> &[GaussianSource] {
        &self.components
    }

    pub fn component(&self, k: usize) -> Result<&GaussianSource> {
        self.components.get(k).ok_or(Error::IndexOutOfRange {
            index: k,
            len: self.components.len(),
        })
    }

    pub fn s_max(&self) -> usize {
        self.s_max
    }

    pub fn ranks(&self) -> Vec<usize> {
        self.components.iter().map(|c| c.rank()).collect()
    }

    /// `s_km = rank(Σ_k + Σ_m)`.
    pub fn pair_rank(&self, k: usize, m: usize) -> Result<usize> {
        let a = self.component(k)?;
        let b = self.component(m)?;
        Ok(linalg::psd_rank(&(a.covariance() + b.covariance())))
    }

    /// Overlapping exactly when `s_k = s_m = s_km`.
    pub fn overlap_case(&self, k: usize, m: usize) -> Result<OverlapCase> {
        let skm = self.pair_rank(k, m)?;
        let sk = self.component(k)?.rank();
        let sm = self.component(m)?.rank();
        Ok(if sk == sm && sm == skm {
            OverlapCase::Overlapping
        } else {
            OverlapCase::NonOverlapping
        })
    }

    /// Total trace `Σ_k p_k tr(Σ_k)`.
    pub fn weighted_trace(&self) -> f64 {
        self.weights
            .iter()
            .zip(&self.components)
            .map(|(p, c)| p * c.trace())
            .sum()
    }
}

/// Linear measurement `y = Φx + w`, `w ~ N(0, σ² I)`.
#[derive(Debug, Clone)]
pub struct MeasurementSystem {
    kernel: DMatrix<f64>,
    noise_variance: f64,
}

impl MeasurementSystem {
    pub fn new(kernel: DMatrix<f64>, noise_variance: f64) -> Result<Self> {
        if kernel.nrows() < 1 || kernel.ncols() < 1 {
            return Err(Error::invalid("kernel must have at least one row and column"));
        }
        if !(noise_variance > 0.0 && noise_variance.is_finite()) {
            return Err(Error::invalid(format!(
                "noise variance must be positive, got {noise_variance}"
            )));
        }
        Ok(Self {
            kernel,
            noise_variance,
        })
    }

    pub fn kernel(&self) -> &DMatrix<f64> {
        &self.kernel
    }

    pub fn noise_variance(&self) -> f64 {
        self.noise_variance
    }

    pub fn num_measurements(&self) -> usize {
        self.kernel.nrows()
    }

    pub fn signal_dim(&self) -> usize {
        self.kernel.ncols()
    }

    pub fn with_noise_variance(&self, noise_variance: f64) -> Result<Self> {
        Self::new(self.kernel.clone(), noise_variance)
    }

    /// `tr(Φ Φᵀ)`.
    pub fn sensed_power(&self) -> f64 {
        self.kernel.norm_squared()
    }

    pub(crate) fn check_dim(&self, n: usize) -> Result<()> {
        if self.signal_dim() != n {
            return Err(Error::DimensionMismatch {
                what: "kernel columns vs signal dimension",
                expected: n,
                got: self.signal_dim(),
            });
        }
        Ok(())
    }
}

/// Membership test `x ∈ Im(A)` for PSD `A`; equivalent to rank(A + xxᵀ) = rank(A).
///
/// Projects onto the eigenvectors with eigenvalue above `RANK_TOL · λ_max`
/// and compares the residual with `1e-8 · ‖x‖`.
pub fn in_image(vector: &DVector<f64>, matrix: &DMatrix<f64>) -> Result<bool> {
    if matrix.nrows() != vector.len() {
        return Err(Error::DimensionMismatch {
            what: "matrix size vs vector length",
            expected: vector.len(),
            got: matrix.nrows(),
        });
    }
    let norm = vector.norm();
    if norm == 0.0 {
        return Ok(true);
    }
    let basis = eig_psd(matrix)?.image_basis(RANK_TOL);
    let residual = vector - &basis * (basis.transpose() * vector);
    Ok(residual.norm() <= 1e-8 * norm)
}
