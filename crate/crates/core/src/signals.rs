//! Trailing averages and smoothed rate series.
//!
//! Rates are always a ratio of separately smoothed numerator and
//! denominator counts, never a smoothed daily ratio.

use std::io::Write;

use chrono::{Days, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::cohort::{CohortTable, Signal, StratumKey};
use crate::error::{Error, Result};
use crate::ingest::DailyTestRecord;

pub const SMOOTHING_WINDOW: usize = 7;
pub const DEFAULT_MIN_DEATHS: u64 = 2;

/// A dense daily series with a gap mask (`true` = undefined).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSeries {
    pub start: NaiveDate,
    pub values: Vec<f64>,
    pub gaps: Vec<bool>,
}

impl TimeSeries {
    pub fn new(start: NaiveDate, values: Vec<f64>) -> TimeSeries {
        let gaps = vec![false; values.len()];
        TimeSeries { start, values, gaps }
    }

    pub fn with_gaps(start: NaiveDate, values: Vec<f64>, gaps: Vec<bool>) -> Result<TimeSeries> {
        if values.len() != gaps.len() {
            return Err(Error::LengthMismatch { expected: values.len(), actual: gaps.len() });
        }
        if let Some(i) = values.iter().zip(&gaps).position(|(v, g)| !g && !v.is_finite()) {
            return Err(Error::NonFinite(i));
        }
        Ok(TimeSeries { start, values, gaps })
    }

    pub fn from_counts(start: NaiveDate, counts: &[u64]) -> TimeSeries {
        TimeSeries::new(start, counts.iter().map(|&c| c as f64).collect())
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn date_at(&self, i: usize) -> NaiveDate {
        self.start + Days::new(i as u64)
    }

    pub fn index_of(&self, date: NaiveDate) -> Option<usize> {
        let off = (date - self.start).num_days();
        (off >= 0 && (off as usize) < self.len()).then_some(off as usize)
    }

    pub fn get(&self, i: usize) -> Option<f64> {
        (i < self.len() && !self.gaps[i]).then(|| self.values[i])
    }

    pub fn at(&self, date: NaiveDate) -> Option<f64> {
        self.index_of(date).and_then(|i| self.get(i))
    }

    pub fn is_defined(&self, i: usize) -> bool {
        !self.gaps[i]
    }

    /// `(day offset, value)` for every defined point.
    pub fn defined_points(&self) -> Vec<(usize, f64)> {
        (0..self.len()).filter_map(|i| self.get(i).map(|v| (i, v))).collect()
    }

    pub fn defined_count(&self) -> usize {
        self.gaps.iter().filter(|g| !**g).count()
    }
}

/// Trailing mean over `[t - window + 1, t]`. The first `window - 1` days,
/// and any day whose window touches a gap, are gaps.
pub fn trailing_average(raw: &TimeSeries, window: usize) -> TimeSeries {
    assert!(window >= 1, "window must be positive");
    let n = raw.len();
    let mut values = vec![0.0; n];
    let mut gaps = vec![true; n];
    // last gap index seen so far, to skip windows containing one
    let mut last_gap: Option<usize> = None;
    for t in 0..n {
        if raw.gaps[t] {
            last_gap = Some(t);
        }
        if t + 1 < window {
            continue;
        }
        let lo = t + 1 - window;
        if matches!(last_gap, Some(g) if g >= lo) {
            continue;
        }
        let sum: f64 = raw.values[lo..=t].iter().sum();
        values[t] = sum / window as f64;
        gaps[t] = false;
    }
    TimeSeries { start: raw.start, values, gaps }
}

/// Seven-day trailing ("lagged") average.
pub fn trailing_average_7d(raw: &TimeSeries) -> TimeSeries {
    trailing_average(raw, SMOOTHING_WINDOW)
}

/// Integer trailing-window sums; `None` where the window is incomplete.
pub fn trailing_sum(counts: &[u64], window: usize) -> Vec<Option<u64>> {
    (0..counts.len())
        .map(|t| (t + 1 >= window).then(|| counts[t + 1 - window..=t].iter().sum()))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RateKind {
    /// Cohort case fatality rate.
    Cfr,
    /// Cohort hospitalization fatality rate.
    Hfr,
    PosTestRate,
    Share,
    /// Same-day reported deaths over same-day confirmed cases (not cohort aligned).
    IncidenceCfr,
}

impl RateKind {
    pub fn label(self) -> &'static str {
        match self {
            RateKind::Cfr => "cfr",
            RateKind::Hfr => "hfr",
            RateKind::PosTestRate => "pos_test_rate",
            RateKind::Share => "share",
            RateKind::IncidenceCfr => "incidence_cfr",
        }
    }
}

/// A smoothed ratio with its smoothed numerator and denominator support.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateSeries {
    pub kind: RateKind,
    pub label: String,
    pub ratio: TimeSeries,
    pub numerator: TimeSeries,
    pub denominator: TimeSeries,
}

impl RateSeries {
    pub fn at(&self, date: NaiveDate) -> Option<f64> {
        self.ratio.at(date)
    }
}

/// Divide two smoothed series. Gaps wherever either side is a gap or the
/// denominator is zero.
pub fn ratio_of_smoothed(
    kind: RateKind,
    label: impl Into<String>,
    numerator: TimeSeries,
    denominator: TimeSeries,
) -> Result<RateSeries> {
    if numerator.len() != denominator.len() {
        return Err(Error::LengthMismatch { expected: denominator.len(), actual: numerator.len() });
    }
    if numerator.start != denominator.start {
        return Err(Error::InvalidArgument("numerator and denominator start on different dates".into()));
    }
    let n = numerator.len();
    let mut values = vec![0.0; n];
    let mut gaps = vec![true; n];
    for i in 0..n {
        if let (Some(a), Some(b)) = (numerator.get(i), denominator.get(i)) {
            if b > 0.0 {
                values[i] = a / b;
                gaps[i] = false;
            }
        }
    }
    Ok(RateSeries {
        kind,
        label: label.into(),
        ratio: TimeSeries { start: numerator.start, values, gaps },
        numerator,
        denominator,
    })
}

fn stratum_counts(table: &CohortTable, stratum: StratumKey, signal: Signal) -> Result<Vec<u64>> {
    table
        .signal(stratum, signal)
        .ok_or_else(|| Error::InvalidArgument(format!("stratum {stratum} not in table")))
}

/// Smoothed eventual deaths over smoothed cases for one stratum.
pub fn cfr_series(table: &CohortTable, stratum: StratumKey) -> Result<RateSeries> {
    let deaths = stratum_counts(table, stratum, Signal::Deaths)?;
    let cases = stratum_counts(table, stratum, Signal::Cases)?;
    ratio_of_smoothed(
        RateKind::Cfr,
        stratum.to_string(),
        trailing_average_7d(&TimeSeries::from_counts(table.start, &deaths)),
        trailing_average_7d(&TimeSeries::from_counts(table.start, &cases)),
    )
}

/// Smoothed hospitalized-and-died over smoothed eventual hospitalizations.
/// Dates whose 7-day window holds fewer than `min_deaths` hospitalized
/// deaths are gaps.
pub fn hfr_series(table: &CohortTable, stratum: StratumKey, min_deaths: u64) -> Result<RateSeries> {
    let joint = stratum_counts(table, stratum, Signal::HospitalizedAndDied)?;
    let hosp = stratum_counts(table, stratum, Signal::Hospitalizations)?;
    let mut rate = ratio_of_smoothed(
        RateKind::Hfr,
        stratum.to_string(),
        trailing_average_7d(&TimeSeries::from_counts(table.start, &joint)),
        trailing_average_7d(&TimeSeries::from_counts(table.start, &hosp)),
    )?;
    for (i, s) in trailing_sum(&joint, SMOOTHING_WINDOW).into_iter().enumerate() {
        if s.is_none_or(|s| s < min_deaths) {
            rate.ratio.gaps[i] = true;
            rate.ratio.values[i] = 0.0;
        }
    }
    Ok(rate)
}

/// Unsmoothed pooled ratio over the whole table, e.g. the crude cohort CFR.
pub fn pooled_ratio(table: &CohortTable, stratum: StratumKey, numerator: Signal, denominator: Signal) -> Option<f64> {
    let num: u64 = table.signal(stratum, numerator)?.iter().sum();
    let den: u64 = table.signal(stratum, denominator)?.iter().sum();
    (den > 0).then(|| num as f64 / den as f64)
}

/// Naive same-day CFR from incidence data (reported deaths / confirmed cases
/// on each day). Not cohort aligned and not bounded by 1.
pub fn incidence_cfr(reported_deaths: &TimeSeries, confirmed_cases: &TimeSeries) -> Result<RateSeries> {
    ratio_of_smoothed(
        RateKind::IncidenceCfr,
        "incidence",
        trailing_average_7d(reported_deaths),
        trailing_average_7d(confirmed_cases),
    )
}

/// Smoothed new positives over smoothed new tests.
pub fn positive_test_rate(tests: &[DailyTestRecord]) -> Result<RateSeries> {
    let Some(first) = tests.first() else {
        return Err(Error::InsufficientData("no testing records".into()));
    };
    for (i, r) in tests.iter().enumerate() {
        if r.date != first.date + Days::new(i as u64) {
            return Err(Error::InvalidArgument(format!("testing records not on a dense daily grid at {}", r.date)));
        }
    }
    let pos: Vec<u64> = tests.iter().map(|r| r.new_positives).collect();
    let tot: Vec<u64> = tests.iter().map(|r| r.new_tests).collect();
    ratio_of_smoothed(
        RateKind::PosTestRate,
        "tests",
        trailing_average_7d(&TimeSeries::from_counts(first.date, &pos)),
        trailing_average_7d(&TimeSeries::from_counts(first.date, &tot)),
    )
}

fn opt_field(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Long-format export: `date,stratum,value,num_support,den_support,gap`.
/// Gap values are written as empty fields.
pub fn write_rate_csv<W: Write>(out: W, series: &[RateSeries]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["date", "stratum", "value", "num_support", "den_support", "gap"])?;
    for s in series {
        for i in 0..s.ratio.len() {
            let gap = s.ratio.gaps[i];
            w.write_record([
                s.ratio.date_at(i).to_string(),
                s.label.clone(),
                opt_field(s.ratio.get(i)),
                opt_field(s.numerator.get(i)),
                opt_field(s.denominator.get(i)),
                (gap as u8).to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}
