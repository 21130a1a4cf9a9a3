//! Seeded, parallel Monte Carlo estimates of reconstruction MSE.
//!
//! The sample budget is split into `workers` contiguous chunks. Worker `w`
//! draws from [`worker_rng`]`(seed, w)` and keeps running moments; chunks
//! are merged in worker order, so a result depends only on
//! `(seed, samples, workers)` and never on thread scheduling.

use nalgebra::DVector;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::estimators::{Estimator, EstimatorRegistry};
use crate::model::sampling::{draw_class, draw_gaussian, draw_noise};
use crate::model::{GmmSource, MeasurementSystem};
use crate::rng::{worker_rng, SimRng};

pub const DEFAULT_WORKERS: usize = 4;
pub const MIN_SAMPLES: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MonteCarloResult {
    pub estimate: f64,
    pub std_error: f64,
    pub samples: usize,
    pub seed: u64,
}

impl MonteCarloResult {
    /// Standard error of the difference of two independent or paired estimates,
    /// taken conservatively as `√(se₁² + se₂²)`.
    pub fn combined_se(&self, other: &MonteCarloResult) -> f64 {
        self.std_error.hypot(other.std_error)
    }
}

/// Welford accumulator with Chan's pairwise merge.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct RunningMoments {
    count: u64,
    mean: f64,
    m2: f64,
}

impl RunningMoments {
    pub fn push(&mut self, x: f64) {
        self.count += 1;
        let delta = x - self.mean;
        self.mean += delta / self.count as f64;
        self.m2 += delta * (x - self.mean);
    }

    pub fn merge(&mut self, other: &RunningMoments) {
        if other.count == 0 {
            return;
        }
        if self.count == 0 {
            *self = *other;
            return;
        }
        let n = self.count + other.count;
        let delta = other.mean - self.mean;
        let (na, nb) = (self.count as f64, other.count as f64);
        self.mean += delta * nb / n as f64;
        self.m2 += other.m2 + delta * delta * na * nb / n as f64;
        self.count = n;
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Unbiased sample variance; zero below two samples.
    pub fn variance(&self) -> f64 {
        if self.count < 2 {
            0.0
        } else {
            self.m2 / (self.count - 1) as f64
        }
    }

    pub fn std_error(&self) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            (self.variance() / self.count as f64).sqrt()
        }
    }

    pub fn to_result(&self, seed: u64) -> MonteCarloResult {
        MonteCarloResult {
            estimate: self.mean.max(0.0),
            std_error: self.std_error(),
            samples: self.count as usize,
            seed,
        }
    }
}

/// Runs `draw` once per sample and accumulates the `width` values it writes.
///
/// `draw` receives the worker's generator and a zeroed output slice.
pub fn parallel_moments<F>(
    samples: usize,
    seed: u64,
    workers: usize,
    width: usize,
    draw: F,
) -> Vec<RunningMoments>
where
    F: Fn(&mut SimRng, &mut [f64]) + Sync,
{
    let workers = workers.max(1);
    let base = samples / workers;
    let extra = samples % workers;
    let chunks: Vec<Vec<RunningMoments>> = (0..workers)
        .into_par_iter()
        .map(|w| {
            let count = base + usize::from(w < extra);
            let mut rng = worker_rng(seed, w as u64);
            let mut acc = vec![RunningMoments::default(); width];
            let mut buf = vec![0.0; width];
            for _ in 0..count {
                buf.iter_mut().for_each(|b| *b = 0.0);
                draw(&mut rng, &mut buf);
                for (a, v) in acc.iter_mut().zip(&buf) {
                    a.push(*v);
                }
            }
            acc
        })
        .collect();
    let mut total = vec![RunningMoments::default(); width];
    for chunk in &chunks {
        for (t, c) in total.iter_mut().zip(chunk) {
            t.merge(c);
        }
    }
    total
}

/// Draws `(c, x, w)`, forms `y = Φx + w` and hands `(x, y)` to `visit`.
pub(crate) fn draw_measurement(
    gmm: &GmmSource,
    factors: &[nalgebra::DMatrix<f64>],
    system: &MeasurementSystem,
    rng: &mut SimRng,
) -> (DVector<f64>, DVector<f64>) {
    let k = draw_class(gmm.weights(), rng);
    let x = draw_gaussian(&gmm.components()[k], &factors[k], rng);
    let noise = draw_noise(system.num_measurements(), system.noise_variance().sqrt(), rng);
    let y = system.kernel() * &x + noise;
    (x, y)
}

/// Paired Monte Carlo: every estimator sees the same `(x, y)` draws.
pub fn monte_carlo_paired(
    gmm: &GmmSource,
    system: &MeasurementSystem,
    estimators: &[&dyn Estimator],
    samples: usize,
    seed: u64,
    workers: usize,
) -> Result<Vec<MonteCarloResult>> {
    if samples < MIN_SAMPLES {
        return Err(Error::invalid(format!(
            "Monte Carlo needs at least {MIN_SAMPLES} samples, got {samples}"
        )));
    }
    system.check_dim(gmm.dim())?;
    let factors: Vec<_> = gmm.components().iter().map(|c| c.factor()).collect();
    let moments = parallel_moments(samples, seed, workers, estimators.len(), |rng, out| {
        let (x, y) = draw_measurement(gmm, &factors, system, rng);
        for (o, est) in out.iter_mut().zip(estimators) {
            *o = (&x - est.estimate(&y)).norm_squared();
        }
    });
    Ok(moments.iter().map(|m| m.to_result(seed)).collect())
}

/// Paired run over estimators looked up by name in the default registry.
pub fn monte_carlo_named(
    gmm: &GmmSource,
    system: &MeasurementSystem,
    names: &[&str],
    samples: usize,
    seed: u64,
    workers: usize,
) -> Result<Vec<MonteCarloResult>> {
    let registry = EstimatorRegistry::with_defaults();
    let built = names
        .iter()
        .map(|n| registry.get(n)?.build(gmm, system))
        .collect::<Result<Vec<_>>>()?;
    let refs: Vec<&dyn Estimator> = built.iter().map(|b| b.as_ref()).collect();
    monte_carlo_paired(gmm, system, &refs, samples, seed, workers)
}

/// `E‖x − x̂(y)‖²` for one named estimator with [`DEFAULT_WORKERS`] streams.
pub fn monte_carlo_mse(
    gmm: &GmmSource,
    system: &MeasurementSystem,
    estimator: &str,
    samples: usize,
    seed: u64,
) -> Result<MonteCarloResult> {
    Ok(monte_carlo_named(gmm, system, &[estimator], samples, seed, DEFAULT_WORKERS)?[0])
}

/// MSE of classify-and-reconstruct, an upper bound on the mixture MMSE.
pub fn mse_cr_upper_bound(
    gmm: &GmmSource,
    system: &MeasurementSystem,
    samples: usize,
    seed: u64,
) -> Result<MonteCarloResult> {
    monte_carlo_mse(gmm, system, "classify_reconstruct", samples, seed)
}
