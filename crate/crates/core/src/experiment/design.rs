//! Designed versus random kernels.

use serde::Serialize;

use super::table::{Cell, Table};
use crate::analysis::{expansion_gaussian, expansion_lower_bound, gaussian_mmse, mse_lower_bound};
use crate::error::{Error, Result};
use crate::kernel::{
    designed_mmse, expansion_designed, expansion_lower_bound_designed, mse_lower_bound_designed,
    KernelStrategy, RandomKernel,
};
use crate::model::{GmmSource, MeasurementSystem};
use crate::rng::derive_seed;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DesignCompareSpec {
    pub ells: Vec<usize>,
    pub sigma2_grid: Vec<f64>,
    pub random_trials: usize,
    pub seed: u64,
}

/// For a single Gaussian `designed` is the water-filled MMSE and the random
/// columns are Gaussian MMSEs; for a mixture both sides are the per-class
/// lower bounds (designed: each class with its own designed kernel).
#[derive(Debug, Clone, PartialEq)]
pub struct DesignRow {
    pub ell: usize,
    pub sigma2: f64,
    pub designed: f64,
    pub random_mean: f64,
    pub random_min: f64,
    pub random_max: f64,
    pub designed_floor: f64,
    pub designed_slope: f64,
    pub random_floor_mean: f64,
    pub random_slope_mean: f64,
    pub lbd: Option<f64>,
}

pub fn design_compare(gmm: &GmmSource, spec: &DesignCompareSpec) -> Result<Vec<DesignRow>> {
    if spec.ells.is_empty() || spec.sigma2_grid.is_empty() || spec.ells.contains(&0) {
        return Err(Error::invalid("ℓ list and σ² grid must be nonempty with ℓ ≥ 1"));
    }
    if spec.random_trials == 0 {
        return Err(Error::invalid("random_trials must be at least 1"));
    }
    if let Some(bad) = spec.sigma2_grid.iter().find(|s| !(**s > 0.0)) {
        return Err(Error::invalid(format!("σ² values must be positive, got {bad}")));
    }
    let single = gmm.num_classes() == 1;
    let mut rows = Vec::new();
    for &ell in &spec.ells {
        let kernels = (0..spec.random_trials)
            .map(|t| RandomKernel.build(gmm, ell, 1.0, derive_seed(spec.seed, &[0x6473, t as u64])))
            .collect::<Result<Vec<_>>>()?;
        let (designed_exp, random_exps) = if single {
            let src = &gmm.components()[0];
            (
                expansion_designed(src, ell)?,
                kernels.iter().map(|k| expansion_gaussian(src, k)).collect::<Result<Vec<_>>>()?,
            )
        } else {
            (
                expansion_lower_bound_designed(gmm, ell)?,
                kernels.iter().map(|k| expansion_lower_bound(gmm, k)).collect::<Result<Vec<_>>>()?,
            )
        };
        let trials = spec.random_trials as f64;
        let random_floor_mean = random_exps.iter().map(|e| e.floor).sum::<f64>() / trials;
        let random_slope_mean = random_exps.iter().map(|e| e.slope).sum::<f64>() / trials;
        for &s2 in &spec.sigma2_grid {
            let mut values = Vec::with_capacity(kernels.len());
            for k in &kernels {
                let sys = MeasurementSystem::new(k.clone(), s2)?;
                values.push(if single {
                    gaussian_mmse(&gmm.components()[0], &sys)?
                } else {
                    mse_lower_bound(gmm, &sys)?
                });
            }
            let lbd = mse_lower_bound_designed(gmm, ell, s2)?;
            let designed = if single {
                designed_mmse(&gmm.components()[0], ell, s2)?
            } else {
                lbd
            };
            rows.push(DesignRow {
                ell,
                sigma2: s2,
                designed,
                random_mean: values.iter().sum::<f64>() / trials,
                random_min: values.iter().copied().fold(f64::INFINITY, f64::min),
                random_max: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                designed_floor: designed_exp.floor,
                designed_slope: designed_exp.slope,
                random_floor_mean,
                random_slope_mean,
                lbd: if single { None } else { Some(lbd) },
            });
        }
    }
    Ok(rows)
}

pub fn design_table(spec: &DesignCompareSpec, model_label: &str, rows: &[DesignRow]) -> Table {
    let with_lbd = rows.iter().any(|r| r.lbd.is_some());
    let mut columns = vec![
        "ell",
        "sigma2",
        "designed",
        "random_mean",
        "random_min",
        "random_max",
        "designed_floor",
        "designed_slope",
        "random_floor_mean",
        "random_slope_mean",
    ];
    if with_lbd {
        columns.push("lbd");
    }
    let mut t = Table::new(columns);
    t.meta("seed", spec.seed)
        .meta("model", model_label)
        .meta("spec", serde_json::to_string(spec).expect("specs serialize"));
    for r in rows {
        let mut row: Vec<Cell> = vec![
            r.ell.into(),
            r.sigma2.into(),
            r.designed.into(),
            r.random_mean.into(),
            r.random_min.into(),
            r.random_max.into(),
            r.designed_floor.into(),
            r.designed_slope.into(),
            r.random_floor_mean.into(),
            r.random_slope_mean.into(),
        ];
        if with_lbd {
            row.push(r.lbd.into());
        }
        t.push(row);
    }
    t
}
