//! Locating the number of measurements at which the MMSE floor vanishes.

use serde::Serialize;

use super::table::{Cell, Table};
use crate::analysis::{expansion_gaussian, monte_carlo_named, FLOOR_REL_TOL, MIN_SAMPLES};
use crate::error::{Error, Result};
use crate::kernel::{KernelStrategy, RandomKernel};
use crate::model::{GmmSource, MeasurementSystem};
use crate::rng::derive_seed;

/// A Monte Carlo floor must exceed this fraction of the source power after
/// subtracting ten standard errors.
pub const MC_FLOOR_REL: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PhaseScanSpec {
    pub ells: Vec<usize>,
    pub sigma2_probe: f64,
    pub trials: usize,
    pub mc_samples: usize,
    pub seed: u64,
    pub workers: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhaseRow {
    pub ell: usize,
    pub floor_estimate: f64,
    pub std_error: Option<f64>,
    /// `None` where the outcome is not determined by the rank relations (ℓ = s_max for mixtures).
    pub floor_present: Option<bool>,
}

fn trial_seed(seed: u64, trial: usize) -> u64 {
    derive_seed(seed, &[0x7068_6173, trial as u64])
}

/// Single Gaussians use the closed-form floor averaged over `trials` random
/// kernels; mixtures use conditional-mean Monte Carlo at `sigma2_probe`.
pub fn phase_scan(gmm: &GmmSource, spec: &PhaseScanSpec) -> Result<Vec<PhaseRow>> {
    if spec.ells.is_empty() || spec.ells.contains(&0) {
        return Err(Error::invalid("ℓ list must be nonempty with entries ≥ 1"));
    }
    if spec.trials == 0 {
        return Err(Error::invalid("trials must be at least 1"));
    }
    if !(spec.sigma2_probe > 0.0) {
        return Err(Error::invalid("probe noise variance must be positive"));
    }
    let mut rows = Vec::with_capacity(spec.ells.len());
    if gmm.num_classes() == 1 {
        let source = &gmm.components()[0];
        let threshold = FLOOR_REL_TOL * source.trace();
        for &ell in &spec.ells {
            let mut total = 0.0;
            for t in 0..spec.trials {
                let k = RandomKernel.build(gmm, ell, spec.sigma2_probe, trial_seed(spec.seed, t))?;
                total += expansion_gaussian(source, &k)?.floor;
            }
            let floor = total / spec.trials as f64;
            rows.push(PhaseRow {
                ell,
                floor_estimate: floor,
                std_error: None,
                floor_present: Some(floor >= threshold && floor > 0.0),
            });
        }
        return Ok(rows);
    }
    if spec.mc_samples < MIN_SAMPLES {
        return Err(Error::invalid(format!("Monte Carlo needs at least {MIN_SAMPLES} samples")));
    }
    let power = gmm.weighted_trace();
    for &ell in &spec.ells {
        let mut total = 0.0;
        let mut var = 0.0;
        for t in 0..spec.trials {
            let ts = trial_seed(spec.seed, t);
            let k = RandomKernel.build(gmm, ell, spec.sigma2_probe, ts)?;
            let sys = MeasurementSystem::new(k, spec.sigma2_probe)?;
            let r = monte_carlo_named(
                gmm,
                &sys,
                &["conditional_mean"],
                spec.mc_samples,
                derive_seed(ts, &[ell as u64]),
                spec.workers,
            )?[0];
            total += r.estimate;
            var += r.std_error * r.std_error;
        }
        let n = spec.trials as f64;
        let floor = total / n;
        let se = var.sqrt() / n;
        let present = floor - 10.0 * se > MC_FLOOR_REL * power;
        rows.push(PhaseRow {
            ell,
            floor_estimate: floor,
            std_error: Some(se),
            floor_present: if ell == gmm.s_max() { None } else { Some(present) },
        });
    }
    Ok(rows)
}

pub fn phase_table(spec: &PhaseScanSpec, model_label: &str, rows: &[PhaseRow]) -> Table {
    let mut t = Table::new(vec!["ell", "floor_estimate", "std_error", "floor_present"]);
    t.meta("seed", spec.seed)
        .meta("model", model_label)
        .meta("spec", serde_json::to_string(spec).expect("specs serialize"));
    for r in rows {
        t.push(vec![
            r.ell.into(),
            r.floor_estimate.into(),
            r.std_error.into(),
            r.floor_present.map_or(Cell::Text("unclassified".into()), Cell::Bool),
        ]);
    }
    t
}
