//! Residual block bootstrap with post-blackening around a spline trend.
//!
//! Each replicate resamples residuals in blocks, adds them back onto the
//! base fitted values, and refits the spline. Levels and relative drops are
//! read off the same replicate curves.
//!
//! Residuals of the fit itself are high-pass filtered: the spline has
//! already absorbed the slow part of the noise, which is exactly the part
//! that moves the trend. Resampling them understates the spread of the
//! trend, badly so when the noise is serially correlated. By default the
//! resampled residuals are therefore leave-block-out residuals, each taken
//! against a fit that never saw its neighborhood.

use std::io::Write;

use chrono::{Days, NaiveDate};
use rand::RngCore;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::gcv::leave_block_out_residuals;
use super::rng::{replicate_rng, uniform_index};
use super::spline::{fit_points, Lambda, SplineCurve, SplineFit, SplineSmoother};
use crate::error::{Error, Result};
use crate::signals::TimeSeries;

/// Replicates whose drop is undefined may be at most this fraction before
/// the estimate is flagged.
pub const MAX_EXCLUDED_FRACTION: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BlockScheme {
    /// Overlapping windows, every start position equally likely.
    Moving,
    /// Disjoint consecutive blocks.
    NonOverlapping,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResidualKind {
    /// `y - fitted` of the base fit.
    Fitted,
    /// `y` minus the base-parameter fit without the points within
    /// `block_length - 1` days, centered.
    LeaveBlockOut,
}

pub const DEFAULT_BLOCK_LENGTH: usize = 7;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapConfig {
    pub replicates: usize,
    pub block_length: usize,
    pub seed: u64,
    pub level: f64,
    pub scheme: BlockScheme,
    /// Smoothing parameter for the base fit.
    pub lambda: Lambda,
    pub residuals: ResidualKind,
    /// Re-run the selection rule on every replicate instead of reusing the
    /// base parameter.
    pub reselect_lambda: bool,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        BootstrapConfig {
            replicates: 1000,
            block_length: DEFAULT_BLOCK_LENGTH,
            seed: 0,
            level: 0.95,
            scheme: BlockScheme::Moving,
            lambda: Lambda::block_cv_for(DEFAULT_BLOCK_LENGTH),
            residuals: ResidualKind::LeaveBlockOut,
            reselect_lambda: false,
        }
    }
}

impl BootstrapConfig {
    pub fn validate(&self) -> Result<()> {
        if self.replicates < 1 {
            return Err(Error::InvalidArgument("replicate count must be >= 1".into()));
        }
        if self.block_length < 1 {
            return Err(Error::InvalidArgument("block length must be >= 1".into()));
        }
        if !(self.level > 0.0 && self.level < 1.0) {
            return Err(Error::InvalidArgument(format!("confidence level {} not in (0, 1)", self.level)));
        }
        Ok(())
    }
}

fn check_block(n: usize, block: usize) -> Result<()> {
    if block == 0 {
        return Err(Error::InvalidArgument("block length must be >= 1".into()));
    }
    if n < block {
        return Err(Error::InsufficientData(format!("series of length {n} shorter than block length {block}")));
    }
    Ok(())
}

/// Concatenate `ceil(n / block)` windows drawn uniformly with replacement
/// from the `n - block + 1` overlapping windows, truncated to length `n`.
pub fn moving_block_resample<R: RngCore + ?Sized>(residuals: &[f64], block: usize, rng: &mut R) -> Result<Vec<f64>> {
    let n = residuals.len();
    check_block(n, block)?;
    let starts = (n - block + 1) as u64;
    let mut out = Vec::with_capacity(n + block);
    while out.len() < n {
        let s = uniform_index(rng, starts) as usize;
        out.extend_from_slice(&residuals[s..s + block]);
    }
    out.truncate(n);
    Ok(out)
}

/// Like [`moving_block_resample`] but drawing from the `floor(n / block)`
/// disjoint blocks.
pub fn nonoverlapping_block_resample<R: RngCore + ?Sized>(residuals: &[f64], block: usize, rng: &mut R) -> Result<Vec<f64>> {
    let n = residuals.len();
    check_block(n, block)?;
    let blocks = (n / block) as u64;
    let mut out = Vec::with_capacity(n + block);
    while out.len() < n {
        let s = uniform_index(rng, blocks) as usize * block;
        out.extend_from_slice(&residuals[s..s + block]);
    }
    out.truncate(n);
    Ok(out)
}

/// Synthetic ordinates: base fitted values plus resampled residuals.
pub fn post_blacken(base: &SplineFit, resampled: &[f64]) -> Result<Vec<f64>> {
    if resampled.len() != base.fitted.len() {
        return Err(Error::LengthMismatch { expected: base.fitted.len(), actual: resampled.len() });
    }
    Ok(base.fitted.iter().zip(resampled).map(|(f, r)| f + r).collect())
}

/// Nearest-rank percentile of sorted values: rank `ceil(p * n)`, at least 1.
pub fn nearest_rank(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    assert!(n > 0, "no values");
    // guard against 0.025 * 1000 = 25.000000000000004
    let rank = ((p * n as f64) - 1e-9).ceil().max(1.0) as usize;
    sorted[rank.min(n) - 1]
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntervalEstimate {
    pub date: NaiveDate,
    pub median: f64,
    pub lower: f64,
    pub upper: f64,
    /// Whether any of the three values was clipped to `[0, 1]`.
    pub clipped: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DropEstimate {
    pub date_old: NaiveDate,
    pub date_new: NaiveDate,
    pub median: f64,
    pub lower: f64,
    pub upper: f64,
    /// Replicates contributing to the percentiles.
    pub used: usize,
    /// Replicates with a non-positive old value, excluded.
    pub excluded: usize,
    /// More than [`MAX_EXCLUDED_FRACTION`] of replicates were excluded.
    pub flagged: bool,
}

/// Base fit plus the refitted replicate trends.
#[derive(Debug, Clone)]
pub struct ReplicateSet {
    pub base: SplineFit,
    curves: Vec<SplineCurve>,
    lambdas: Vec<f64>,
    level: f64,
}

impl ReplicateSet {
    /// Fit the base spline to the series' defined points and draw replicates.
    pub fn generate(series: &TimeSeries, config: &BootstrapConfig) -> Result<ReplicateSet> {
        config.validate()?;
        let (x, y): (Vec<f64>, Vec<f64>) = series.defined_points().into_iter().map(|(i, v)| (i as f64, v)).unzip();
        let base = fit_points(series.start, &x, &y, config.lambda)?;
        ReplicateSet::from_fit(base, config)
    }

    pub fn from_fit(base: SplineFit, config: &BootstrapConfig) -> Result<ReplicateSet> {
        config.validate()?;
        check_block(base.residuals.len(), config.block_length)?;
        let smoother = SplineSmoother::new(&base.abscissae, base.lambda)?;
        let pool = match config.residuals {
            ResidualKind::Fitted => base.residuals.clone(),
            ResidualKind::LeaveBlockOut => {
                leave_block_out_residuals(&base.abscissae, &base.ordinates, config.block_length - 1, base.lambda)?
            }
        };
        let out: Vec<(SplineCurve, f64)> = (0..config.replicates)
            .into_par_iter()
            .map(|r| {
                let mut rng = replicate_rng(config.seed, r as u64);
                let resampled = match config.scheme {
                    BlockScheme::Moving => moving_block_resample(&pool, config.block_length, &mut rng)?,
                    BlockScheme::NonOverlapping => nonoverlapping_block_resample(&pool, config.block_length, &mut rng)?,
                };
                let synthetic = post_blacken(&base, &resampled)?;
                if config.reselect_lambda && !matches!(config.lambda, Lambda::Fixed(_)) {
                    let lam = config.lambda.resolve(&base.abscissae, &synthetic)?;
                    let curve = SplineSmoother::new(&base.abscissae, lam)?.smooth(&synthetic)?;
                    Ok((curve, lam))
                } else {
                    Ok((smoother.smooth(&synthetic)?, base.lambda))
                }
            })
            .collect::<Result<Vec<_>>>()?;
        let (curves, lambdas) = out.into_iter().unzip();
        Ok(ReplicateSet { base, curves, lambdas, level: config.level })
    }

    pub fn len(&self) -> usize {
        self.curves.len()
    }

    pub fn is_empty(&self) -> bool {
        self.curves.is_empty()
    }

    pub fn curves(&self) -> &[SplineCurve] {
        &self.curves
    }

    /// Smoothing parameter used by each replicate.
    pub fn lambdas(&self) -> &[f64] {
        &self.lambdas
    }

    /// Every replicate's trend evaluated at `date`, in replicate order.
    pub fn values_at(&self, date: NaiveDate) -> Result<Vec<f64>> {
        let t = self.base.abscissa_in_range(date)?;
        Ok(self.curves.iter().map(|c| c.eval(t)).collect())
    }

    fn percentiles(&self, mut v: Vec<f64>) -> (f64, f64, f64) {
        v.sort_by(f64::total_cmp);
        let tail = (1.0 - self.level) / 2.0;
        (nearest_rank(&v, 0.5), nearest_rank(&v, tail), nearest_rank(&v, 1.0 - tail))
    }

    /// Median and percentile bounds of the replicate trends at `date`, clipped to `[0, 1]`.
    pub fn interval(&self, date: NaiveDate) -> Result<IntervalEstimate> {
        let (median, lower, upper) = self.percentiles(self.values_at(date)?);
        let clip = |v: f64| v.clamp(0.0, 1.0);
        let clipped = [median, lower, upper].iter().any(|v| clip(*v) != *v);
        Ok(IntervalEstimate { date, median: clip(median), lower: clip(lower), upper: clip(upper), clipped })
    }

    /// Relative change `(new - old) / old` per replicate, then percentiles.
    pub fn drop_between(&self, date_old: NaiveDate, date_new: NaiveDate) -> Result<DropEstimate> {
        let old = self.values_at(date_old)?;
        let new = self.values_at(date_new)?;
        let ratios: Vec<f64> = old
            .iter()
            .zip(&new)
            .filter(|(o, _)| **o > 0.0)
            .map(|(o, n)| (n - o) / o)
            .filter(|r| r.is_finite())
            .collect();
        let excluded = self.len() - ratios.len();
        if ratios.is_empty() {
            return Err(Error::InsufficientData(format!(
                "every replicate has a non-positive value at {date_old}"
            )));
        }
        let used = ratios.len();
        let (median, lower, upper) = self.percentiles(ratios);
        Ok(DropEstimate {
            date_old,
            date_new,
            median,
            lower,
            upper,
            used,
            excluded,
            flagged: excluded as f64 > MAX_EXCLUDED_FRACTION * self.len() as f64,
        })
    }

    /// Interval estimates for every day in the fitted range.
    pub fn bands(&self) -> Result<Vec<IntervalEstimate>> {
        let first = self.base.first_date();
        let days = (self.base.last_date() - first).num_days();
        (0..=days).map(|i| self.interval(first + Days::new(i as u64))).collect()
    }

    /// Ribbon export: `date,fitted,median,lower,upper`.
    pub fn write_bands_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["date", "fitted", "median", "lower", "upper"])?;
        for b in self.bands()? {
            let fitted = self.base.eval_date(b.date)?;
            w.write_record([
                b.date.to_string(),
                fitted.to_string(),
                b.median.to_string(),
                b.lower.to_string(),
                b.upper.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Per-date median and percentile interval of the bootstrapped trend.
pub fn estimate_with_ci(series: &TimeSeries, config: &BootstrapConfig, dates: &[NaiveDate]) -> Result<Vec<IntervalEstimate>> {
    let set = ReplicateSet::generate(series, config)?;
    dates.iter().map(|d| set.interval(*d)).collect()
}

/// Relative change between two dates with a percentile interval.
pub fn estimate_drop(series: &TimeSeries, config: &BootstrapConfig, date_old: NaiveDate, date_new: NaiveDate) -> Result<DropEstimate> {
    ReplicateSet::generate(series, config)?.drop_between(date_old, date_new)
}
