//! Floor and decay-rate summaries of an MSE-vs-noise curve.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecayDiagnostics {
    /// MSE at the smallest noise variance.
    pub floor_estimate: f64,
    /// Floor subtracted before fitting the exponent.
    pub floor_guess: f64,
    /// Slope of `log10(mse − floor_guess)` against `log10 σ²`; 1 for `O(σ²)`, 0.5 for `O(σ)`.
    pub decay_exponent: f64,
}

/// Number of smallest-noise points the exponent is fitted on.
pub const FIT_POINTS: usize = 3;

/// `points` are `(σ², mse)` sorted by strictly decreasing σ² and spanning at
/// least three decades. `expansion_floor` is subtracted when the measured
/// floor is at least `1e-9 · trace`.
pub fn decay_diagnostics(points: &[(f64, f64)], expansion_floor: f64, trace: f64) -> Result<DecayDiagnostics> {
    if points.len() < 4 {
        return Err(Error::invalid(format!(
            "decay diagnostics need at least 4 points, got {}",
            points.len()
        )));
    }
    if points.iter().any(|(s2, _)| !(*s2 > 0.0)) {
        return Err(Error::invalid("noise variances must be positive"));
    }
    if points.windows(2).any(|w| w[1].0 >= w[0].0) {
        return Err(Error::invalid("noise grid must be strictly decreasing"));
    }
    let span = (points[0].0 / points[points.len() - 1].0).log10();
    if span < 3.0 - 1e-9 {
        return Err(Error::invalid(format!("noise grid spans {span:.2} decades, need 3")));
    }
    let floor_estimate = points[points.len() - 1].1;
    let floor_guess = if floor_estimate < 1e-9 * trace {
        0.0
    } else {
        expansion_floor
    };
    let tail = &points[points.len() - FIT_POINTS..];
    let mut xs = Vec::with_capacity(FIT_POINTS);
    let mut ys = Vec::with_capacity(FIT_POINTS);
    for (s2, mse) in tail {
        let residual = mse - floor_guess;
        if !(residual > 0.0) {
            return Err(Error::Numerical(format!(
                "nonpositive residual {residual:e} at σ² = {s2:e}"
            )));
        }
        xs.push(s2.log10());
        ys.push(residual.log10());
    }
    Ok(DecayDiagnostics {
        floor_estimate,
        floor_guess,
        decay_exponent: least_squares_slope(&xs, &ys),
    })
}

fn least_squares_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}
