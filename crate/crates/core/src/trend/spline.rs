//! Natural cubic smoothing splines via the Reinsch banded formulation.
//!
//! For abscissae `x` with spacings `h`, let `Q` be the `n x (n-2)` second
//! divided-difference matrix and `R` the `(n-2) x (n-2)` tridiagonal matrix
//! with `(h[j] + h[j+1]) / 3` on the diagonal and `h[j+1] / 6` off it. The
//! minimizer of `sum (y - f)^2 + lambda * int f''^2` has knot values
//! `g = y - lambda * Q gamma` where `(R + lambda Q'Q) gamma = Q' y`, and
//! `gamma` holds the second derivatives at the interior knots. The
//! pentadiagonal system is factored once as `L D L'` and reused, so
//! refitting new ordinates on the same abscissae costs `O(n)`.

use std::sync::Arc;

use chrono::{Days, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signals::TimeSeries;

pub const MIN_SPLINE_POINTS: usize = 4;

/// `L D L'` factor of a symmetric pentadiagonal matrix.
#[derive(Debug, Clone)]
pub(crate) struct PentaLdl {
    d: Vec<f64>,
    l1: Vec<f64>,
    l2: Vec<f64>,
}

impl PentaLdl {
    /// Factor from the three upper bands (`b0[j] = B[j][j]`,
    /// `b1[j] = B[j][j+1]`, `b2[j] = B[j][j+2]`).
    pub(crate) fn factor(b0: &[f64], b1: &[f64], b2: &[f64]) -> Result<PentaLdl> {
        let m = b0.len();
        let mut d = vec![0.0; m];
        let mut l1 = vec![0.0; m];
        let mut l2 = vec![0.0; m];
        for j in 0..m {
            let mut dj = b0[j];
            if j >= 1 {
                dj -= l1[j - 1] * l1[j - 1] * d[j - 1];
            }
            if j >= 2 {
                dj -= l2[j - 2] * l2[j - 2] * d[j - 2];
            }
            if !dj.is_finite() || dj <= 0.0 {
                return Err(Error::DegenerateAbscissae(format!("banded system not positive definite at row {j}")));
            }
            d[j] = dj;
            if j + 1 < m {
                let mut v = b1[j];
                if j >= 1 {
                    v -= l2[j - 1] * l1[j - 1] * d[j - 1];
                }
                l1[j] = v / dj;
            }
            if j + 2 < m {
                l2[j] = b2[j] / dj;
            }
        }
        Ok(PentaLdl { d, l1, l2 })
    }

    pub(crate) fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let m = self.d.len();
        let mut z = rhs.to_vec();
        for j in 0..m {
            if j >= 1 {
                z[j] -= self.l1[j - 1] * z[j - 1];
            }
            if j >= 2 {
                z[j] -= self.l2[j - 2] * z[j - 2];
            }
        }
        for (zj, dj) in z.iter_mut().zip(&self.d[..m]) {
            *zj /= dj;
        }
        for j in (0..m).rev() {
            if j + 1 < m {
                z[j] -= self.l1[j] * z[j + 1];
            }
            if j + 2 < m {
                z[j] -= self.l2[j] * z[j + 2];
            }
        }
        z
    }

    /// Entries of the inverse within the band: `(diag, super1, super2)`.
    pub(crate) fn band_inverse(&self) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let m = self.d.len();
        let mut s0 = vec![0.0; m];
        let mut s1 = vec![0.0; m];
        let mut s2 = vec![0.0; m];
        let at0 = |s0: &[f64], i: usize| if i < m { s0[i] } else { 0.0 };
        for j in (0..m).rev() {
            let l1 = if j + 1 < m { self.l1[j] } else { 0.0 };
            let l2 = if j + 2 < m { self.l2[j] } else { 0.0 };
            // Sigma[j+1][j+1], Sigma[j+1][j+2], Sigma[j+2][j+2]
            let a11 = at0(&s0, j + 1);
            let a12 = if j + 2 < m { s1[j + 1] } else { 0.0 };
            let a22 = at0(&s0, j + 2);
            if j + 1 < m {
                s1[j] = -l1 * a11 - l2 * a12;
            }
            if j + 2 < m {
                s2[j] = -l1 * a12 - l2 * a22;
            }
            s0[j] = 1.0 / self.d[j] - l1 * s1[j] - l2 * s2[j];
        }
        (s0, s1, s2)
    }
}

/// Precomputed operators for smoothing on a fixed set of abscissae.
#[derive(Debug, Clone)]
pub struct SplineSmoother {
    x: Arc<[f64]>,
    h: Vec<f64>,
    lambda: f64,
    // Q columns: entries at rows j, j+1, j+2
    qa: Vec<f64>,
    qb: Vec<f64>,
    qc: Vec<f64>,
    ldl: PentaLdl,
}

pub(crate) fn validate_abscissae(x: &[f64]) -> Result<Vec<f64>> {
    if let Some(i) = x.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite(i));
    }
    let h: Vec<f64> = x.windows(2).map(|w| w[1] - w[0]).collect();
    if h.iter().any(|d| d.is_nan() || *d <= 0.0) {
        return Err(Error::DegenerateAbscissae("abscissae must be strictly increasing".into()));
    }
    Ok(h)
}

/// Bands of `Q'Q` and `R` for the given spacings.
pub(crate) struct Operators {
    pub qa: Vec<f64>,
    pub qb: Vec<f64>,
    pub qc: Vec<f64>,
    pub qtq: [Vec<f64>; 3],
    pub r: [Vec<f64>; 2],
}

pub(crate) fn operators(h: &[f64]) -> Operators {
    let m = h.len() - 1;
    let qa: Vec<f64> = (0..m).map(|j| 1.0 / h[j]).collect();
    let qc: Vec<f64> = (0..m).map(|j| 1.0 / h[j + 1]).collect();
    let qb: Vec<f64> = (0..m).map(|j| -qa[j] - qc[j]).collect();
    let mut t0 = vec![0.0; m];
    let mut t1 = vec![0.0; m];
    let mut t2 = vec![0.0; m];
    for j in 0..m {
        t0[j] = qa[j] * qa[j] + qb[j] * qb[j] + qc[j] * qc[j];
        if j + 1 < m {
            t1[j] = qb[j] * qa[j + 1] + qc[j] * qb[j + 1];
        }
        if j + 2 < m {
            t2[j] = qc[j] * qa[j + 2];
        }
    }
    let r0: Vec<f64> = (0..m).map(|j| (h[j] + h[j + 1]) / 3.0).collect();
    let r1: Vec<f64> = (0..m).map(|j| if j + 1 < m { h[j + 1] / 6.0 } else { 0.0 }).collect();
    Operators { qa, qb, qc, qtq: [t0, t1, t2], r: [r0, r1] }
}

impl SplineSmoother {
    pub fn new(x: &[f64], lambda: f64) -> Result<SplineSmoother> {
        if x.len() < MIN_SPLINE_POINTS {
            return Err(Error::InsufficientData(format!(
                "smoothing spline needs at least {MIN_SPLINE_POINTS} points, got {}",
                x.len()
            )));
        }
        if !lambda.is_finite() || lambda < 0.0 {
            return Err(Error::InvalidArgument(format!("smoothing parameter {lambda} must be finite and >= 0")));
        }
        let h = validate_abscissae(x)?;
        let ops = operators(&h);
        let b0: Vec<f64> = ops.r[0].iter().zip(&ops.qtq[0]).map(|(r, t)| r + lambda * t).collect();
        let b1: Vec<f64> = ops.r[1].iter().zip(&ops.qtq[1]).map(|(r, t)| r + lambda * t).collect();
        let b2: Vec<f64> = ops.qtq[2].iter().map(|t| lambda * t).collect();
        let ldl = PentaLdl::factor(&b0, &b1, &b2)?;
        Ok(SplineSmoother { x: x.into(), h, lambda, qa: ops.qa, qb: ops.qb, qc: ops.qc, ldl })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn abscissae(&self) -> &[f64] {
        &self.x
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    /// `Q'y` as a difference of adjacent slopes, so constant data gives exactly zero.
    fn qt_mul(&self, y: &[f64]) -> Vec<f64> {
        (0..self.qa.len())
            .map(|j| (y[j + 2] - y[j + 1]) * self.qc[j] - (y[j + 1] - y[j]) * self.qa[j])
            .collect()
    }

    fn q_mul(&self, gamma: &[f64]) -> Vec<f64> {
        let n = self.x.len();
        let m = gamma.len();
        let mut out = vec![0.0; n];
        for j in 0..m {
            out[j] += self.qa[j] * gamma[j];
            out[j + 1] += self.qb[j] * gamma[j];
            out[j + 2] += self.qc[j] * gamma[j];
        }
        out
    }

    /// Smooth ordinates `y` given on this smoother's abscissae.
    pub fn smooth(&self, y: &[f64]) -> Result<SplineCurve> {
        if y.len() != self.x.len() {
            return Err(Error::LengthMismatch { expected: self.x.len(), actual: y.len() });
        }
        if let Some(i) = y.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(i));
        }
        let gamma = self.ldl.solve(&self.qt_mul(y));
        let qg = self.q_mul(&gamma);
        let fitted: Vec<f64> = y.iter().zip(&qg).map(|(yi, q)| yi - self.lambda * q).collect();
        let mut second = Vec::with_capacity(self.x.len());
        second.push(0.0);
        second.extend_from_slice(&gamma);
        second.push(0.0);
        Ok(SplineCurve { x: self.x.clone(), fitted, second })
    }

    /// Trace of the hat matrix `(I + lambda K)^-1`, in `O(n)`.
    pub fn hat_trace(&self) -> f64 {
        let n = self.x.len() as f64;
        if self.lambda == 0.0 {
            return n;
        }
        let ops = operators(&self.h);
        let (s0, s1, s2) = self.ldl.band_inverse();
        let m = s0.len();
        let mut tr = 0.0;
        for j in 0..m {
            tr += s0[j] * ops.qtq[0][j];
            if j + 1 < m {
                tr += 2.0 * s1[j] * ops.qtq[1][j];
            }
            if j + 2 < m {
                tr += 2.0 * s2[j] * ops.qtq[2][j];
            }
        }
        n - self.lambda * tr
    }
}

/// A natural cubic spline given by knot values and knot second derivatives.
#[derive(Debug, Clone, PartialEq)]
pub struct SplineCurve {
    x: Arc<[f64]>,
    fitted: Vec<f64>,
    second: Vec<f64>,
}

impl SplineCurve {
    pub fn fitted(&self) -> &[f64] {
        &self.fitted
    }

    pub fn second_derivatives(&self) -> &[f64] {
        &self.second
    }

    pub fn abscissae(&self) -> &[f64] {
        &self.x
    }

    /// Evaluate anywhere; linear extrapolation outside the knot range.
    pub fn eval(&self, t: f64) -> f64 {
        let x = &self.x;
        let g = &self.fitted;
        let c = &self.second;
        let n = x.len();
        if t <= x[0] {
            let h = x[1] - x[0];
            let slope = (g[1] - g[0]) / h - h * c[1] / 6.0;
            return g[0] + slope * (t - x[0]);
        }
        if t >= x[n - 1] {
            let h = x[n - 1] - x[n - 2];
            let slope = (g[n - 1] - g[n - 2]) / h + h * c[n - 2] / 6.0;
            return g[n - 1] + slope * (t - x[n - 1]);
        }
        // x[i] <= t < x[i+1]
        let i = x.partition_point(|v| *v <= t) - 1;
        let h = x[i + 1] - x[i];
        let a = t - x[i];
        let b = x[i + 1] - t;
        g[i] + a * (g[i + 1] - g[i]) / h - a * b / 6.0 * ((1.0 + a / h) * c[i + 1] + (1.0 + b / h) * c[i])
    }
}

/// A fitted smoothing spline over a daily rate series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplineFit {
    /// Date corresponding to abscissa 0.
    pub origin: NaiveDate,
    /// Day offsets of the defined points.
    pub abscissae: Vec<f64>,
    pub ordinates: Vec<f64>,
    pub lambda: f64,
    pub fitted: Vec<f64>,
    pub second_derivatives: Vec<f64>,
    pub residuals: Vec<f64>,
}

impl SplineFit {
    pub fn from_curve(origin: NaiveDate, ordinates: Vec<f64>, lambda: f64, curve: &SplineCurve) -> SplineFit {
        let residuals = ordinates.iter().zip(curve.fitted()).map(|(y, f)| y - f).collect();
        SplineFit {
            origin,
            abscissae: curve.abscissae().to_vec(),
            ordinates,
            lambda,
            fitted: curve.fitted().to_vec(),
            second_derivatives: curve.second_derivatives().to_vec(),
            residuals,
        }
    }

    pub fn curve(&self) -> SplineCurve {
        SplineCurve {
            x: self.abscissae.as_slice().into(),
            fitted: self.fitted.clone(),
            second: self.second_derivatives.clone(),
        }
    }

    pub fn eval(&self, t: f64) -> f64 {
        self.curve().eval(t)
    }

    pub fn offset_of(&self, date: NaiveDate) -> f64 {
        (date - self.origin).num_days() as f64
    }

    pub fn first_date(&self) -> NaiveDate {
        self.origin + Days::new(self.abscissae[0] as u64)
    }

    pub fn last_date(&self) -> NaiveDate {
        self.origin + Days::new(*self.abscissae.last().expect("non-empty fit") as u64)
    }

    /// Map a date to an abscissa, requiring it to lie within the fitted range.
    pub fn abscissa_in_range(&self, date: NaiveDate) -> Result<f64> {
        let t = self.offset_of(date);
        if t < self.abscissae[0] || t > *self.abscissae.last().expect("non-empty fit") {
            return Err(Error::DateOutOfRange { date, first: self.first_date(), last: self.last_date() });
        }
        Ok(t)
    }

    pub fn eval_date(&self, date: NaiveDate) -> Result<f64> {
        Ok(self.eval(self.abscissa_in_range(date)?))
    }
}

/// Smoothing parameter choice.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Lambda {
    Fixed(f64),
    /// Generalized cross-validation over the default grid.
    Gcv,
    /// Leave-block-out cross-validation over the default grid; each point is
    /// predicted from a fit without the points within this many days of it.
    BlockCv(usize),
}

impl Lambda {
    /// Leave-block-out selection matched to a bootstrap block length.
    pub fn block_cv_for(block_length: usize) -> Lambda {
        Lambda::BlockCv(block_length.saturating_sub(1))
    }

    pub fn resolve(self, x: &[f64], y: &[f64]) -> Result<f64> {
        match self {
            Lambda::Fixed(l) => Ok(l),
            Lambda::Gcv => Ok(super::gcv::select_lambda_gcv_points(x, y)?.lambda),
            Lambda::BlockCv(h) => Ok(super::gcv::select_lambda_block_cv_points(x, y, h)?.lambda),
        }
    }
}

/// Fit on explicit points.
pub fn fit_points(origin: NaiveDate, x: &[f64], y: &[f64], lambda: Lambda) -> Result<SplineFit> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch { expected: x.len(), actual: y.len() });
    }
    if x.len() < MIN_SPLINE_POINTS {
        return Err(Error::InsufficientData(format!(
            "smoothing spline needs at least {MIN_SPLINE_POINTS} points, got {}",
            x.len()
        )));
    }
    if let Some(i) = y.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite(i));
    }
    let lam = lambda.resolve(x, y)?;
    let smoother = SplineSmoother::new(x, lam)?;
    let curve = smoother.smooth(y)?;
    Ok(SplineFit::from_curve(origin, y.to_vec(), lam, &curve))
}

/// Fit a smoothing spline to the defined points of a daily series; gaps are skipped.
pub fn fit_smoothing_spline(series: &TimeSeries, lambda: Lambda) -> Result<SplineFit> {
    let (x, y) = defined_xy(series);
    fit_points(series.start, &x, &y, lambda)
}

pub(crate) fn defined_xy(series: &TimeSeries) -> (Vec<f64>, Vec<f64>) {
    series.defined_points().into_iter().map(|(i, v)| (i as f64, v)).unzip()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn origin() -> NaiveDate {
        NaiveDate::from_ymd_opt(2020, 4, 1).unwrap()
    }

    #[test]
    fn reproduces_line_for_any_lambda() {
        let x: Vec<f64> = (0..30).map(|i| i as f64 * 1.5).collect();
        let y: Vec<f64> = x.iter().map(|v| 2.0 * v + 1.0).collect();
        for lam in [0.0, 1e-3, 1.0, 1e3, 1e8] {
            let fit = fit_points(origin(), &x, &y, Lambda::Fixed(lam)).unwrap();
            for (f, t) in fit.fitted.iter().zip(&y) {
                assert!((f - t).abs() < 1e-8, "lambda {lam}");
            }
        }
    }

    #[test]
    fn zero_lambda_interpolates() {
        let x = [0.0, 1.0, 2.5, 4.0, 7.0];
        let y = [1.0, -2.0, 0.5, 3.0, 2.0];
        let fit = fit_points(origin(), &x, &y, Lambda::Fixed(0.0)).unwrap();
        assert!(fit.residuals.iter().all(|r| *r == 0.0));
        for (xi, yi) in x.iter().zip(&y) {
            assert!((fit.eval(*xi) - yi).abs() < 1e-12);
        }
    }

    #[test]
    fn eval_reproduces_fitted_at_knots() {
        let x: Vec<f64> = (0..20).map(|i| i as f64).collect();
        let y: Vec<f64> = x.iter().map(|v| (v * 0.4).sin()).collect();
        let fit = fit_points(origin(), &x, &y, Lambda::Fixed(2.0)).unwrap();
        for (xi, fi) in x.iter().zip(&fit.fitted) {
            assert!((fit.eval(*xi) - fi).abs() < 1e-12);
        }
    }

    #[test]
    fn curve_is_c2_at_knots() {
        let x: Vec<f64> = vec![0.0, 1.0, 3.0, 4.0, 6.0, 9.0];
        let y = vec![0.1, 0.4, 0.2, 0.5, 0.3, 0.35];
        let fit = fit_points(origin(), &x, &y, Lambda::Fixed(0.3)).unwrap();
        let c = fit.curve();
        let eps = 1e-5;
        for &k in &x[1..x.len() - 1] {
            let left = (c.eval(k) - c.eval(k - eps)) / eps;
            let right = (c.eval(k + eps) - c.eval(k)) / eps;
            assert!((left - right).abs() < 1e-3);
        }
    }

    #[test]
    fn constants_are_reproduced_bitwise_on_irregular_knots() {
        let x = [0.0, 1.0, 2.0, 15.0, 16.0, 17.5, 30.0];
        let y = [0.3; 7];
        let fit = fit_points(origin(), &x, &y, Lambda::Fixed(7.0)).unwrap();
        assert!(fit.residuals.iter().all(|r| *r == 0.0));
        for t in [-3.0, 0.5, 8.0, 17.0, 29.0, 40.0] {
            assert_eq!(fit.eval(t), 0.3);
        }
    }

    #[test]
    fn too_few_points() {
        let err = fit_points(origin(), &[0.0, 1.0, 2.0], &[1.0, 2.0, 3.0], Lambda::Fixed(1.0)).unwrap_err();
        assert!(matches!(err, Error::InsufficientData(_)));
    }

    #[test]
    fn non_finite_rejected() {
        let err = fit_points(origin(), &[0.0, 1.0, 2.0, 3.0], &[1.0, f64::NAN, 3.0, 4.0], Lambda::Fixed(1.0)).unwrap_err();
        assert!(matches!(err, Error::NonFinite(1)));
    }

    #[test]
    fn duplicate_abscissae_rejected() {
        let err = fit_points(origin(), &[0.0, 1.0, 1.0, 3.0], &[1.0, 2.0, 3.0, 4.0], Lambda::Fixed(1.0)).unwrap_err();
        assert!(matches!(err, Error::DegenerateAbscissae(_)));
    }

    #[test]
    fn dates_outside_range_are_errors() {
        let x: Vec<f64> = (5..15).map(|i| i as f64).collect();
        let y = vec![0.2; 10];
        let fit = fit_points(origin(), &x, &y, Lambda::Fixed(1.0)).unwrap();
        assert!(fit.eval_date(origin()).is_err());
        assert!((fit.eval_date(origin() + Days::new(7)).unwrap() - 0.2).abs() < 1e-14);
    }
}
