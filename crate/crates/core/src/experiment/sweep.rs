//! `(ℓ, σ²)` sweeps over named quantities.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;

use super::table::{Cell, Table};
use crate::analysis::{gaussian_mmse, monte_carlo_named, mse_lower_bound, DEFAULT_WORKERS, MIN_SAMPLES};
use crate::error::{Error, Result};
use crate::estimators::moment_matched_gaussian;
use crate::kernel::{designed_mmse, mse_lower_bound_designed, KernelRegistry};
use crate::model::{GmmSource, MeasurementSystem};
use crate::registry::{Named, Registry};
use crate::rng::derive_seed;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepSpec {
    pub ells: Vec<usize>,
    pub sigma2_grid: Vec<f64>,
    pub quantities: Vec<String>,
    pub mc_samples: usize,
    pub seed: u64,
    /// `random`, `designed` or `fixed:PATH`.
    pub kernel: String,
    pub workers: usize,
}

impl SweepSpec {
    pub fn new(ells: Vec<usize>, sigma2_grid: Vec<f64>, quantities: Vec<String>) -> Self {
        Self {
            ells,
            sigma2_grid,
            quantities,
            mc_samples: 10_000,
            seed: 0,
            kernel: "random".into(),
            workers: DEFAULT_WORKERS,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub ell: usize,
    pub sigma2: f64,
    pub quantity: String,
    pub value: f64,
    pub std_error: Option<f64>,
    pub seed: u64,
}

/// Everything a quantity may need at one grid point.
pub struct SweepPoint<'a> {
    pub gmm: &'a GmmSource,
    pub system: MeasurementSystem,
    pub ell: usize,
    pub mc_samples: usize,
    pub mc_seed: u64,
    pub workers: usize,
}

/// A value reported per grid point.
///
/// Quantities naming an estimator are Monte Carlo estimates; the sweep runs
/// all of them at a point on shared samples.
pub trait SweepQuantity: Named + Send + Sync {
    fn estimator(&self) -> Option<&'static str> {
        None
    }

    /// Rejects models the quantity is not defined for.
    fn check_model(&self, _gmm: &GmmSource) -> Result<()> {
        Ok(())
    }

    fn evaluate(&self, point: &SweepPoint) -> Result<f64>;
}

fn single_gaussian(name: &str, gmm: &GmmSource) -> Result<()> {
    if gmm.num_classes() != 1 {
        return Err(Error::invalid(format!(
            "quantity `{name}` needs a single-Gaussian model, got {} classes",
            gmm.num_classes()
        )));
    }
    Ok(())
}

macro_rules! quantity {
    ($ty:ident, $name:literal) => {
        pub struct $ty;
        impl Named for $ty {
            fn name(&self) -> &'static str {
                $name
            }
        }
    };
}

quantity!(ClosedForm, "closed_form");
quantity!(LowerBound, "lower_bound");
quantity!(CrUpper, "cr_upper");
quantity!(LmmseBound, "lmmse");
quantity!(ConditionalMeanMc, "conditional_mean_mc");
quantity!(Designed, "designed");
quantity!(Lbd, "lbd");

impl SweepQuantity for ClosedForm {
    fn check_model(&self, gmm: &GmmSource) -> Result<()> {
        single_gaussian(self.name(), gmm)
    }

    fn evaluate(&self, p: &SweepPoint) -> Result<f64> {
        gaussian_mmse(&p.gmm.components()[0], &p.system)
    }
}

impl SweepQuantity for LowerBound {
    fn evaluate(&self, p: &SweepPoint) -> Result<f64> {
        mse_lower_bound(p.gmm, &p.system)
    }
}

/// The LMMSE risk depends only on the first two moments, so it is the
/// Gaussian MMSE of the moment-matched source, exactly.
impl SweepQuantity for LmmseBound {
    fn evaluate(&self, p: &SweepPoint) -> Result<f64> {
        gaussian_mmse(&moment_matched_gaussian(p.gmm)?, &p.system)
    }
}

impl SweepQuantity for Designed {
    fn check_model(&self, gmm: &GmmSource) -> Result<()> {
        single_gaussian(self.name(), gmm)
    }

    fn evaluate(&self, p: &SweepPoint) -> Result<f64> {
        designed_mmse(&p.gmm.components()[0], p.ell, p.system.noise_variance())
    }
}

impl SweepQuantity for Lbd {
    fn evaluate(&self, p: &SweepPoint) -> Result<f64> {
        mse_lower_bound_designed(p.gmm, p.ell, p.system.noise_variance())
    }
}

fn monte_carlo_value(q: &dyn SweepQuantity, p: &SweepPoint) -> Result<f64> {
    let est = q.estimator().expect("Monte Carlo quantities name an estimator");
    Ok(monte_carlo_named(p.gmm, &p.system, &[est], p.mc_samples, p.mc_seed, p.workers)?[0].estimate)
}

impl SweepQuantity for CrUpper {
    fn estimator(&self) -> Option<&'static str> {
        Some("classify_reconstruct")
    }

    fn evaluate(&self, p: &SweepPoint) -> Result<f64> {
        monte_carlo_value(self, p)
    }
}

impl SweepQuantity for ConditionalMeanMc {
    fn estimator(&self) -> Option<&'static str> {
        Some("conditional_mean")
    }

    fn evaluate(&self, p: &SweepPoint) -> Result<f64> {
        monte_carlo_value(self, p)
    }
}

pub type QuantityRegistry = Registry<dyn SweepQuantity>;

impl QuantityRegistry {
    pub fn with_defaults() -> Self {
        let mut r: Self = Registry::new("quantity");
        r.register(Box::new(ClosedForm));
        r.register(Box::new(LowerBound));
        r.register(Box::new(CrUpper));
        r.register(Box::new(LmmseBound));
        r.register(Box::new(ConditionalMeanMc));
        r.register(Box::new(Designed));
        r.register(Box::new(Lbd));
        r
    }
}

/// Seed of the Monte Carlo run at one grid point.
pub fn point_seed(seed: u64, ell: usize, sigma2: f64) -> u64 {
    derive_seed(seed, &[ell as u64, sigma2.to_bits()])
}

/// Evaluates every requested quantity at every `(ℓ, σ²)`.
///
/// One kernel is built per `ℓ` and reused across the noise grid unless the
/// kernel mode depends on σ². Rows are sorted by `(ℓ, σ², quantity)`.
pub fn run_sweep(gmm: &GmmSource, spec: &SweepSpec) -> Result<Vec<SweepRow>> {
    let quantities = QuantityRegistry::with_defaults();
    if spec.ells.is_empty() || spec.sigma2_grid.is_empty() || spec.quantities.is_empty() {
        return Err(Error::invalid("ℓ list, σ² grid and quantity list must be nonempty"));
    }
    if let Some(bad) = spec.sigma2_grid.iter().find(|s| !(**s > 0.0 && s.is_finite())) {
        return Err(Error::invalid(format!("σ² values must be positive, got {bad}")));
    }
    if spec.ells.contains(&0) {
        return Err(Error::invalid("ℓ values must be at least 1"));
    }
    let mut selected = Vec::new();
    for name in &spec.quantities {
        let q = quantities.get(name)?;
        q.check_model(gmm)?;
        selected.push(q);
    }
    let any_mc = selected.iter().any(|q| q.estimator().is_some());
    if any_mc && spec.mc_samples < MIN_SAMPLES {
        return Err(Error::invalid(format!(
            "Monte Carlo quantities need at least {MIN_SAMPLES} samples"
        )));
    }
    let mut kernels = KernelRegistry::with_defaults();
    let strategy = kernels.resolve(&spec.kernel)?;

    let mut points: Vec<(usize, f64, DMatrix<f64>)> = Vec::new();
    for &ell in &spec.ells {
        let shared = if strategy.noise_dependent() {
            None
        } else {
            Some(strategy.build(gmm, ell, spec.sigma2_grid[0], spec.seed)?)
        };
        for &s2 in &spec.sigma2_grid {
            let kernel = match &shared {
                Some(k) => k.clone(),
                None => strategy.build(gmm, ell, s2, spec.seed)?,
            };
            points.push((ell, s2, kernel));
        }
    }

    let per_point: Vec<Result<Vec<SweepRow>>> = points
        .into_par_iter()
        .map(|(ell, s2, kernel)| {
            let point = SweepPoint {
                gmm,
                system: MeasurementSystem::new(kernel, s2)?,
                ell,
                mc_samples: spec.mc_samples,
                mc_seed: point_seed(spec.seed, ell, s2),
                workers: spec.workers,
            };
            evaluate_point(&point, &selected, spec.seed)
        })
        .collect();
    let mut rows = Vec::new();
    for r in per_point {
        rows.extend(r?);
    }
    rows.sort_by(|a, b| {
        a.ell
            .cmp(&b.ell)
            .then(a.sigma2.total_cmp(&b.sigma2))
            .then(a.quantity.cmp(&b.quantity))
    });
    Ok(rows)
}

fn evaluate_point(point: &SweepPoint, selected: &[&dyn SweepQuantity], seed: u64) -> Result<Vec<SweepRow>> {
    let row = |q: &dyn SweepQuantity, value: f64, std_error: Option<f64>| SweepRow {
        ell: point.ell,
        sigma2: point.system.noise_variance(),
        quantity: q.name().to_string(),
        value,
        std_error,
        seed,
    };
    let mut rows = Vec::new();
    let mc: Vec<&dyn SweepQuantity> = selected.iter().copied().filter(|q| q.estimator().is_some()).collect();
    if !mc.is_empty() {
        let names: Vec<&str> = mc.iter().map(|q| q.estimator().unwrap()).collect();
        let results = monte_carlo_named(
            point.gmm,
            &point.system,
            &names,
            point.mc_samples,
            point.mc_seed,
            point.workers,
        )?;
        for (q, r) in mc.iter().zip(results) {
            rows.push(row(*q, r.estimate, Some(r.std_error)));
        }
    }
    for q in selected.iter().filter(|q| q.estimator().is_none()) {
        rows.push(row(*q, q.evaluate(point)?, None));
    }
    Ok(rows)
}

pub const SWEEP_COLUMNS: [&str; 6] = ["ell", "sigma2", "quantity", "value", "std_error", "seed"];

pub fn sweep_table(spec: &SweepSpec, model_label: &str, rows: &[SweepRow]) -> Table {
    let mut t = Table::new(SWEEP_COLUMNS.to_vec());
    t.meta("seed", spec.seed)
        .meta("model", model_label)
        .meta("spec", serde_json::to_string(spec).expect("specs serialize"));
    for r in rows {
        t.push(vec![
            r.ell.into(),
            r.sigma2.into(),
            Cell::Text(r.quantity.clone()),
            r.value.into(),
            r.std_error.into(),
            r.seed.into(),
        ]);
    }
    t
}

/// Looks up one value in a row set.
pub fn find_row<'a>(rows: &'a [SweepRow], ell: usize, sigma2: f64, quantity: &str) -> Option<&'a SweepRow> {
    rows.iter()
        .find(|r| r.ell == ell && r.sigma2 == sigma2 && r.quantity == quantity)
}
