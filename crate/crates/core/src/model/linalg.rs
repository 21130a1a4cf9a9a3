//! Symmetric eigendecompositions with explicit numerical-rank tolerances.
//!
//! Every `rank(·)` in the crate goes through [`numerical_rank`] with a
//! threshold relative to the largest eigenvalue. Eigenvalues of PSD inputs
//! that come out slightly negative from rounding are clamped to zero; the
//! ones that are clearly negative are reported as an error.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Relative threshold (times the largest eigenvalue) under which an
/// eigenvalue counts as zero.
pub const RANK_TOL: f64 = 1e-10;

/// Relative symmetry tolerance: `max |A_ij - A_ji| <= SYMMETRY_TOL * (1 + max |A_ij|)`.
pub const SYMMETRY_TOL: f64 = 1e-12;

/// Orthogonal eigenvectors (as columns) and eigenvalues sorted descending.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenDecomposition {
    pub vectors: DMatrix<f64>,
    pub values: DVector<f64>,
}

impl EigenDecomposition {
    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn max_value(&self) -> f64 {
        if self.values.is_empty() {
            0.0
        } else {
            self.values[0].max(0.0)
        }
    }

    /// Number of eigenvalues above `rel_tol * λ_max`.
    pub fn rank(&self, rel_tol: f64) -> usize {
        numerical_rank(self, rel_tol)
    }

    /// Columns spanning the image: eigenvectors with eigenvalue above the tolerance.
    pub fn image_basis(&self, rel_tol: f64) -> DMatrix<f64> {
        let r = self.rank(rel_tol);
        self.vectors.columns(0, r).into_owned()
    }

    /// Columns spanning the (numerical) null space.
    pub fn null_basis(&self, rel_tol: f64) -> DMatrix<f64> {
        let r = self.rank(rel_tol);
        self.vectors.columns(r, self.dim() - r).into_owned()
    }

    /// `V diag(f(λ)) Vᵀ`.
    pub fn map_values(&self, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
        let mut scaled = self.vectors.clone();
        for (j, mut col) in scaled.column_iter_mut().enumerate() {
            col *= f(self.values[j]);
        }
        let out = &scaled * self.vectors.transpose();
        symmetrize(&out)
    }

    pub fn reconstruct(&self) -> DMatrix<f64> {
        self.map_values(|v| v)
    }
}

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Largest absolute asymmetry `max |A_ij - A_ji|`, or an error for non-square input.
pub fn asymmetry(m: &DMatrix<f64>) -> Result<f64> {
    if m.nrows() != m.ncols() {
        return Err(Error::DimensionMismatch {
            what: "square matrix columns",
            expected: m.nrows(),
            got: m.ncols(),
        });
    }
    let n = m.nrows();
    let mut worst: f64 = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    Ok(worst)
}

pub fn check_symmetric(m: &DMatrix<f64>) -> Result<()> {
    let asym = asymmetry(m)?;
    let scale = m.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()));
    if asym > SYMMETRY_TOL * (1.0 + scale) {
        return Err(Error::NotSymmetric { asymmetry: asym });
    }
    Ok(())
}

/// Eigendecomposition of a symmetric matrix, sorted descending.
///
/// The input is symmetrized first and no PSD check is made; use this for
/// matrices that are symmetric by construction up to rounding.
pub fn eig_symmetric(m: &DMatrix<f64>) -> EigenDecomposition {
    let n = m.nrows();
    if n == 0 {
        return EigenDecomposition {
            vectors: DMatrix::zeros(0, 0),
            values: DVector::zeros(0),
        };
    }
    let eig = SymmetricEigen::new(symmetrize(m));
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values = DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let vectors = DMatrix::from_columns(
        &order
            .iter()
            .map(|&i| eig.eigenvectors.column(i).into_owned())
            .collect::<Vec<_>>(),
    );
    EigenDecomposition { vectors, values }
}

/// Eigendecomposition of a symmetric PSD matrix with the default tolerance.
pub fn eig_psd(m: &DMatrix<f64>) -> Result<EigenDecomposition> {
    eig_psd_with_tol(m, RANK_TOL)
}

/// Eigenvalues in `[-tol·λ_max, 0)` are clamped to zero, anything lower is rejected.
pub fn eig_psd_with_tol(m: &DMatrix<f64>, rel_tol: f64) -> Result<EigenDecomposition> {
    check_symmetric(m)?;
    let mut eig = eig_symmetric(m);
    clamp_psd(&mut eig, rel_tol)?;
    Ok(eig)
}

pub(crate) fn clamp_psd(eig: &mut EigenDecomposition, rel_tol: f64) -> Result<()> {
    let lmax = eig.max_value();
    let tolerance = rel_tol * lmax;
    for v in eig.values.iter_mut() {
        if *v < 0.0 {
            if *v < -tolerance {
                return Err(Error::NotPsd {
                    eigenvalue: *v,
                    tolerance,
                });
            }
            *v = 0.0;
        }
    }
    Ok(())
}

/// Count of eigenvalues strictly above `rel_tol * λ_max`; zero for the zero matrix.
pub fn numerical_rank(decomp: &EigenDecomposition, rel_tol: f64) -> usize {
    let lmax = decomp.max_value();
    if lmax <= 0.0 {
        return 0;
    }
    let thresh = rel_tol * lmax;
    decomp.values.iter().filter(|&&v| v > thresh).count()
}

/// Rank of a symmetric PSD matrix (symmetrized, clamped) with the default tolerance.
pub fn psd_rank(m: &DMatrix<f64>) -> usize {
    numerical_rank(&eig_symmetric(m), RANK_TOL)
}

/// Symmetric PSD square root `V diag(√λ) Vᵀ`.
pub fn matrix_sqrt_psd(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let eig = eig_psd(m)?;
    Ok(eig.map_values(|v| v.max(0.0).sqrt()))
}

/// Orthonormal basis of the column span of `m`, via the eigendecomposition of `m mᵀ`.
pub fn column_span(m: &DMatrix<f64>) -> DMatrix<f64> {
    let gram = m * m.transpose();
    eig_symmetric(&gram).image_basis(RANK_TOL)
}
