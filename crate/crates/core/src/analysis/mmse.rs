//! Closed-form Gaussian MMSE, its spectral oracle, the mixture lower bound
//! and the mismatched MSE.

use nalgebra::{DMatrix, DVector};

use crate::error::Result;
use crate::estimators::WienerFilter;
use crate::model::linalg::{eig_symmetric, symmetrize, RANK_TOL};
use crate::model::{GaussianSource, GmmSource, MeasurementSystem};

/// `tr(Σx − ΣxΦᵀ(σ²I + ΦΣxΦᵀ)⁻¹ΦΣx)`.
///
/// Evaluated in square-root information form: with `Σx = BBᵀ` and
/// `G = ΦB`, the error covariance is `B(I + GᵀG/σ²)⁻¹Bᵀ`. A QR of the
/// stacked `[G/σ; I]` gives `R` with `RᵀR = I + GᵀG/σ²`, so the MMSE is
/// `‖R⁻ᵀΛ^{1/2}‖_F²`. `R` has singular values ≥ 1, so no step loses
/// precision as σ² → 0, unlike the literal trace difference.
pub fn gaussian_mmse(source: &GaussianSource, system: &MeasurementSystem) -> Result<f64> {
    system.check_dim(source.dim())?;
    let s = source.rank();
    if s == 0 {
        return Ok(0.0);
    }
    let l = system.num_measurements();
    let sigma = system.noise_variance().sqrt();
    let g = system.kernel() * source.factor();
    let mut stacked = DMatrix::zeros(l + s, s);
    stacked.view_mut((0, 0), (l, s)).copy_from(&(g / sigma));
    stacked.view_mut((l, 0), (s, s)).fill_with_identity();
    let r = stacked.qr().r();
    let sqrt_lambda = DMatrix::from_diagonal(&source.positive_eigenvalues().map(f64::sqrt));
    let x = r
        .transpose()
        .solve_lower_triangular(&sqrt_lambda)
        .expect("R has a unit-bounded diagonal");
    Ok(x.norm_squared())
}

/// `Σ = Σx^{1/2} Φᵀ Φ Σx^{1/2}`.
pub fn sigma_matrix(source: &GaussianSource, kernel: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let sys = MeasurementSystem::new(kernel.clone(), 1.0)?;
    sys.check_dim(source.dim())?;
    let half = source.sqrt_covariance();
    let pk = kernel * &half;
    Ok(symmetrize(&(pk.transpose() * pk)))
}

/// Eigenpairs of `Σ` restricted to `Im(Σx)`, with the Σx-energy `uᵢᵀΣxuᵢ`
/// of each eigenvector.
///
/// `Σ = U_s (GᵀG) U_sᵀ` with `G = ΦU_sΛ^{1/2}`, so the eigenvectors of the
/// `s×s` matrix `GᵀG` lifted through `U_s` are eigenvectors of `Σ`; the
/// remaining eigenvectors of `Σ` lie in `Null(Σx)` and carry zero energy.
pub(crate) struct ReducedSpectrum {
    pub values: DVector<f64>,
    pub energies: DVector<f64>,
    pub rank: usize,
}

pub(crate) fn reduced_spectrum(source: &GaussianSource, kernel: &DMatrix<f64>) -> ReducedSpectrum {
    let g = kernel * source.factor();
    let eig = eig_symmetric(&(g.transpose() * &g));
    let lambda = source.positive_eigenvalues();
    let energies = DVector::from_fn(eig.dim(), |i, _| {
        eig.vectors
            .column(i)
            .iter()
            .zip(lambda.iter())
            .map(|(v, l)| l * v * v)
            .sum()
    });
    let rank = crate::model::numerical_rank(&eig, RANK_TOL);
    ReducedSpectrum {
        values: eig.values.map(|v| v.max(0.0)),
        energies,
        rank,
    }
}

/// `Σ_{i≤ℓ'} uᵢᵀΣxuᵢ / (1 + λᵢ/σ²) + Σ_{i>ℓ'} uᵢᵀΣxuᵢ` over the eigenpairs of `Σ`.
pub fn gaussian_mmse_spectral(source: &GaussianSource, system: &MeasurementSystem) -> Result<f64> {
    system.check_dim(source.dim())?;
    if source.rank() == 0 {
        return Ok(0.0);
    }
    let spec = reduced_spectrum(source, system.kernel());
    let s2 = system.noise_variance();
    let mut total = 0.0;
    for i in 0..spec.values.len() {
        total += if i < spec.rank {
            spec.energies[i] * s2 / (s2 + spec.values[i])
        } else {
            spec.energies[i]
        };
    }
    Ok(total)
}

/// `Σ_k p_k MMSE_k` with each class's Gaussian MMSE under the shared system.
pub fn mse_lower_bound(gmm: &GmmSource, system: &MeasurementSystem) -> Result<f64> {
    let mut total = 0.0;
    for (p, c) in gmm.weights().iter().zip(gmm.components()) {
        total += p * gaussian_mmse(c, system)?;
    }
    Ok(total)
}

/// MSE of the class-`m` Wiener estimator on class-`k` signals.
///
/// Grouped form `tr(EΣ_kEᵀ) + ‖Ed‖² + σ²‖W_m‖_F²` with `E = I − W_mΦ`
/// and `d = μ_k − μ_m`.
pub fn mismatched_mse(gmm: &GmmSource, k: usize, m: usize, system: &MeasurementSystem) -> Result<f64> {
    let actual = gmm.component(k)?;
    let filter = WienerFilter::for_class(gmm, m, system)?;
    let n = gmm.dim();
    let e = DMatrix::identity(n, n) - &filter.gain * system.kernel();
    let d = actual.mean() - gmm.component(m)?.mean();
    let spread = (&e * actual.factor()).norm_squared();
    let bias = (&e * d).norm_squared();
    let noise = system.noise_variance() * filter.gain.norm_squared();
    Ok(spread + bias + noise)
}

/// The same quantity expanded into six traces:
/// `tr(Σ_k) − 2tr(W_kΣ_y^{(k)}W_mᵀ) + tr(W_mΣ_y^{(k)}W_mᵀ) + tr(M)
///  − 2tr(MΦᵀW_mᵀ) + tr(W_mΦMΦᵀW_mᵀ)` with `M = ddᵀ`.
///
/// Subject to cancellation at small σ²; kept as a cross-check of
/// [`mismatched_mse`].
pub fn mismatched_mse_expanded(
    gmm: &GmmSource,
    k: usize,
    m: usize,
    system: &MeasurementSystem,
) -> Result<f64> {
    let ck = gmm.component(k)?;
    let wk = WienerFilter::for_class(gmm, k, system)?.gain;
    let wm = WienerFilter::for_class(gmm, m, system)?.gain;
    let phi = system.kernel();
    let l = system.num_measurements();
    let sy = DMatrix::identity(l, l) * system.noise_variance() + phi * ck.covariance() * phi.transpose();
    let d = ck.mean() - gmm.component(m)?.mean();
    let big_m = &d * d.transpose();
    let t1 = ck.covariance().trace();
    let t2 = (&wk * &sy * wm.transpose()).trace();
    let t3 = (&wm * &sy * wm.transpose()).trace();
    let t4 = big_m.trace();
    let t5 = (&big_m * phi.transpose() * wm.transpose()).trace();
    let t6 = (&wm * phi * &big_m * phi.transpose() * wm.transpose()).trace();
    Ok(t1 - 2.0 * t2 + t3 + t4 - 2.0 * t5 + t6)
}
