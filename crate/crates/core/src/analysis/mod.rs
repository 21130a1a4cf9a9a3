//! MMSE values, low-noise expansions, bounds and Monte Carlo verification.

mod diagnostics;
mod expansion;
mod mmse;
mod montecarlo;

pub use diagnostics::{decay_diagnostics, DecayDiagnostics, FIT_POINTS};
pub use expansion::{expansion_gaussian, expansion_lower_bound, Expansion, Regime, FLOOR_REL_TOL};
pub use mmse::{
    gaussian_mmse, gaussian_mmse_spectral, mismatched_mse, mismatched_mse_expanded,
    mse_lower_bound, sigma_matrix,
};
pub use montecarlo::{
    monte_carlo_mse, monte_carlo_named, monte_carlo_paired, mse_cr_upper_bound, parallel_moments,
    MonteCarloResult, RunningMoments, DEFAULT_WORKERS, MIN_SAMPLES,
};
