//! MMSE reconstruction of Gaussian and Gaussian-mixture sources from noisy
//! compressive linear measurements `y = Φx + w`.
//!
//! * [`model`]: sources, measurement systems, samplers and spectral helpers.
//! * [`estimators`]: Wiener filter, exact mixture conditional mean, MAP
//!   classify-and-reconstruct and LMMSE.
//! * [`analysis`]: closed-form MMSE, low-noise expansions, bounds,
//!   mismatched MSE and the Monte Carlo harness.
//! * [`kernel`]: water-filling kernel design and designed-kernel bounds.
//! * [`experiment`]: sweeps, phase scans, design comparisons, the image
//!   patch pipeline and EM fitting behind the command-line tool.

pub mod analysis;
pub mod error;
pub mod estimators;
pub mod experiment;
pub mod kernel;
pub mod model;
pub mod registry;
pub mod rng;

pub use error::{Error, Result};
