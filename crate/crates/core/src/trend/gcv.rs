//! Smoothing parameter selection: generalized cross-validation, and
//! leave-block-out cross-validation for serially correlated noise.
//!
//! GCV assumes independent errors. On a trailing-average series the errors
//! are correlated over the window, and GCV then mistakes the noise for
//! signal and picks a near-interpolating parameter. Leaving out every point
//! within the correlation range of the one being predicted avoids that.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::spline::{defined_xy, operators, validate_abscissae, SplineCurve, SplineSmoother, MIN_SPLINE_POINTS};
use crate::error::{Error, Result};
use crate::signals::TimeSeries;

pub const GCV_GRID_POINTS: usize = 61;
/// Grid spans `scale * 10^-GCV_DECADES ..= scale * 10^GCV_DECADES`.
pub const GCV_DECADES: f64 = 6.0;
pub const MIN_GCV_POINTS: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LambdaSelection {
    pub lambda: f64,
    pub index: usize,
    pub grid: Vec<f64>,
    pub scores: Vec<f64>,
}

/// Data-dependent scale `tr(R) / tr(Q'Q)` that balances the two terms of
/// the banded system.
pub fn lambda_scale(x: &[f64]) -> Result<f64> {
    let h = validate_abscissae(x)?;
    if h.len() < 2 {
        return Err(Error::InsufficientData("need at least 3 abscissae".into()));
    }
    let ops = operators(&h);
    let tr_r: f64 = ops.r[0].iter().sum();
    let tr_q: f64 = ops.qtq[0].iter().sum();
    Ok(tr_r / tr_q)
}

/// Log-spaced grid of [`GCV_GRID_POINTS`] values around `scale`.
pub fn lambda_grid(scale: f64) -> Vec<f64> {
    let steps = (GCV_GRID_POINTS - 1) as f64;
    (0..GCV_GRID_POINTS)
        .map(|k| scale * 10f64.powf(-GCV_DECADES + 2.0 * GCV_DECADES * k as f64 / steps))
        .collect()
}

/// `n * RSS / (n - tr A)^2`.
pub fn gcv_score(smoother: &SplineSmoother, y: &[f64]) -> Result<f64> {
    let curve = smoother.smooth(y)?;
    let n = y.len() as f64;
    let rss: f64 = y.iter().zip(curve.fitted()).map(|(a, b)| (a - b) * (a - b)).sum();
    let edf = smoother.hat_trace();
    let denom = n - edf;
    Ok(n * rss / (denom * denom))
}

pub fn select_lambda_gcv_points(x: &[f64], y: &[f64]) -> Result<LambdaSelection> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch { expected: x.len(), actual: y.len() });
    }
    if x.len() < MIN_GCV_POINTS {
        return Err(Error::InsufficientData(format!(
            "GCV needs at least {MIN_GCV_POINTS} points, got {}",
            x.len()
        )));
    }
    let grid = lambda_grid(lambda_scale(x)?);
    let scores = grid
        .iter()
        .map(|&lam| gcv_score(&SplineSmoother::new(x, lam)?, y))
        .collect::<Result<Vec<f64>>>()?;
    Ok(pick_first_minimum(grid, scores))
}

fn pick_first_minimum(grid: Vec<f64>, scores: Vec<f64>) -> LambdaSelection {
    // first minimum; NaN scores never win
    let mut index = 0;
    for (i, s) in scores.iter().enumerate() {
        if *s < scores[index] || scores[index].is_nan() {
            index = i;
        }
    }
    LambdaSelection { lambda: grid[index], index, grid, scores }
}

/// For each point, the spline fitted without the points less than or equal
/// to `half_width` away (in abscissa units), evaluated at that point.
pub fn leave_block_out_predictions(x: &[f64], y: &[f64], half_width: usize, lambda: f64) -> Result<Vec<f64>> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch { expected: x.len(), actual: y.len() });
    }
    validate_abscissae(x)?;
    let hw = half_width as f64;
    (0..x.len())
        .into_par_iter()
        .map(|i| {
            let (xs, ys): (Vec<f64>, Vec<f64>) =
                x.iter().zip(y).filter(|(xj, _)| (**xj - x[i]).abs() > hw).map(|(a, b)| (*a, *b)).unzip();
            if xs.len() < MIN_SPLINE_POINTS {
                return Err(Error::InsufficientData(format!(
                    "only {} points remain after leaving out {half_width} days either side",
                    xs.len()
                )));
            }
            let curve: SplineCurve = SplineSmoother::new(&xs, lambda)?.smooth(&ys)?;
            Ok(curve.eval(x[i]))
        })
        .collect()
}

/// Out-of-block residuals `y - prediction`, centered to mean zero.
pub fn leave_block_out_residuals(x: &[f64], y: &[f64], half_width: usize, lambda: f64) -> Result<Vec<f64>> {
    let pred = leave_block_out_predictions(x, y, half_width, lambda)?;
    let r: Vec<f64> = y.iter().zip(&pred).map(|(a, b)| a - b).collect();
    let mean = r.iter().sum::<f64>() / r.len() as f64;
    Ok(r.into_iter().map(|v| v - mean).collect())
}

/// Mean squared out-of-block prediction error for each grid value; the
/// first minimum wins.
pub fn select_lambda_block_cv_points(x: &[f64], y: &[f64], half_width: usize) -> Result<LambdaSelection> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch { expected: x.len(), actual: y.len() });
    }
    if x.len() < MIN_GCV_POINTS {
        return Err(Error::InsufficientData(format!(
            "cross-validation needs at least {MIN_GCV_POINTS} points, got {}",
            x.len()
        )));
    }
    let grid = lambda_grid(lambda_scale(x)?);
    let n = y.len() as f64;
    let scores = grid
        .iter()
        .map(|&lam| {
            let pred = leave_block_out_predictions(x, y, half_width, lam)?;
            Ok(y.iter().zip(&pred).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / n)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(pick_first_minimum(grid, scores))
}

/// Choose the smoothing parameter for the defined points of a series.
pub fn select_lambda_gcv(series: &TimeSeries) -> Result<LambdaSelection> {
    let (x, y) = defined_xy(series);
    select_lambda_gcv_points(&x, &y)
}
