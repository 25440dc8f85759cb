//! Peak-to-peak tables: HFR level at two dates and the relative drop, per
//! stratum, each as a bootstrap median with a percentile interval.

use std::fmt::Write as _;
use std::io::Write;

use chrono::NaiveDate;
use log::info;
use serde::{Deserialize, Serialize};

use crate::cohort::{CohortTable, StratumKey};
use crate::error::{Error, Result};
use crate::record::AgeBand;
use crate::signals::hfr_series;
use crate::trend::{BootstrapConfig, DropEstimate, IntervalEstimate, ReplicateSet};

/// Rows shown by default: aggregate, then 30-39 through 80+.
pub fn default_strata() -> Vec<StratumKey> {
    let mut v = vec![StratumKey::AGGREGATE];
    v.extend(
        [AgeBand::A30_39, AgeBand::A40_49, AgeBand::A50_59, AgeBand::A60_69, AgeBand::A70_79, AgeBand::A80Plus]
            .into_iter()
            .map(StratumKey::band),
    );
    v
}

/// Default date pairs: the two peaks, and the endpoints of the study window.
pub fn default_date_pairs() -> Vec<(NaiveDate, NaiveDate)> {
    let d = |m, day| NaiveDate::from_ymd_opt(2020, m, day).expect("valid date");
    vec![(d(4, 15), d(7, 15)), (d(4, 1), d(11, 1))]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum PeakRow {
    Estimated { stratum: StratumKey, old: IntervalEstimate, new: IntervalEstimate, change: DropEstimate, lambda: f64 },
    /// Not enough support to fit; rendered as a dash.
    Unavailable { stratum: StratumKey, reason: String },
}

impl PeakRow {
    pub fn stratum(&self) -> StratumKey {
        match self {
            PeakRow::Estimated { stratum, .. } | PeakRow::Unavailable { stratum, .. } => *stratum,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeakTable {
    pub date_old: NaiveDate,
    pub date_new: NaiveDate,
    pub min_deaths: u64,
    pub bootstrap: BootstrapConfig,
    pub rows: Vec<PeakRow>,
}

fn row_for(set: &ReplicateSet, stratum: StratumKey, dates: (NaiveDate, NaiveDate)) -> Result<PeakRow> {
    Ok(PeakRow::Estimated {
        stratum,
        old: set.interval(dates.0)?,
        new: set.interval(dates.1)?,
        change: set.drop_between(dates.0, dates.1)?,
        lambda: set.base.lambda,
    })
}

fn dash_or_fail(stratum: StratumKey, e: Error) -> Result<PeakRow> {
    if e.is_data_error() {
        info!("{stratum}: {e}");
        Ok(PeakRow::Unavailable { stratum, reason: e.to_string() })
    } else {
        Err(e)
    }
}

/// Bootstrap each stratum once and read every date pair off the same
/// replicates. `on_set` sees each successful replicate set, e.g. to export
/// ribbons. Failures that come from the data (too few supported days,
/// dates outside the fitted range) become dashed rows.
pub fn peak_tables<F>(
    table: &CohortTable,
    strata: &[StratumKey],
    pairs: &[(NaiveDate, NaiveDate)],
    min_deaths: u64,
    config: &BootstrapConfig,
    mut on_set: F,
) -> Result<Vec<PeakTable>>
where
    F: FnMut(StratumKey, &ReplicateSet) -> Result<()>,
{
    config.validate()?;
    let mut rows: Vec<Vec<PeakRow>> = vec![Vec::with_capacity(strata.len()); pairs.len()];
    for &stratum in strata {
        let set = hfr_series(table, stratum, min_deaths).and_then(|hfr| ReplicateSet::generate(&hfr.ratio, config));
        match set {
            Ok(set) => {
                on_set(stratum, &set)?;
                for (pair, out) in pairs.iter().zip(rows.iter_mut()) {
                    out.push(row_for(&set, stratum, *pair).or_else(|e| dash_or_fail(stratum, e))?);
                }
            }
            Err(e) if e.is_data_error() => {
                info!("{stratum}: {e}");
                for out in rows.iter_mut() {
                    out.push(PeakRow::Unavailable { stratum, reason: e.to_string() });
                }
            }
            Err(e) => return Err(e),
        }
    }
    Ok(pairs
        .iter()
        .zip(rows)
        .map(|(&(date_old, date_new), rows)| PeakTable { date_old, date_new, min_deaths, bootstrap: config.clone(), rows })
        .collect())
}

/// Single date pair version of [`peak_tables`].
pub fn peak_table(
    table: &CohortTable,
    strata: &[StratumKey],
    date_old: NaiveDate,
    date_new: NaiveDate,
    min_deaths: u64,
    config: &BootstrapConfig,
) -> Result<PeakTable> {
    let mut t = peak_tables(table, strata, &[(date_old, date_new)], min_deaths, config, |_, _| Ok(()))?;
    Ok(t.remove(0))
}

fn cell(median: f64, lower: f64, upper: f64) -> String {
    format!("{median:.2} ({lower:.2}, {upper:.2})")
}

fn row_label(s: StratumKey) -> String {
    s.to_string()
}

impl PeakTable {
    pub fn row(&self, stratum: StratumKey) -> Option<&PeakRow> {
        self.rows.iter().find(|r| r.stratum() == stratum)
    }

    pub fn estimated(&self, stratum: StratumKey) -> Option<(&IntervalEstimate, &IntervalEstimate, &DropEstimate)> {
        match self.row(stratum)? {
            PeakRow::Estimated { old, new, change, .. } => Some((old, new, change)),
            PeakRow::Unavailable { .. } => None,
        }
    }

    /// Aligned table with two-decimal cells and `-` for unavailable rows.
    pub fn render_text(&self) -> String {
        let header = [
            "stratum".to_string(),
            format!("HFR {}", self.date_old.format("%m-%d")),
            format!("HFR {}", self.date_new.format("%m-%d")),
            format!("change {} to {}", self.date_old.format("%m-%d"), self.date_new.format("%m-%d")),
        ];
        let mut lines: Vec<[String; 4]> = vec![header];
        let mut notes = Vec::new();
        for r in &self.rows {
            let label = row_label(r.stratum());
            lines.push(match r {
                PeakRow::Estimated { old, new, change, .. } => {
                    let mut l = label;
                    if change.flagged {
                        l.push('*');
                        notes.push(format!("* {}: {} of {} replicates excluded from the change", r.stratum(), change.excluded, change.excluded + change.used));
                    }
                    [l, cell(old.median, old.lower, old.upper), cell(new.median, new.lower, new.upper), cell(change.median, change.lower, change.upper)]
                }
                PeakRow::Unavailable { .. } => [label, "-".into(), "-".into(), "-".into()],
            });
        }
        let widths: Vec<usize> = (0..4).map(|c| lines.iter().map(|l| l[c].chars().count()).max().unwrap_or(0)).collect();
        let mut out = String::new();
        for l in &lines {
            let mut line = format!("{:<w$}", l[0], w = widths[0]);
            for c in 1..4 {
                let _ = write!(line, "  {:>w$}", l[c], w = widths[c]);
            }
            out.push_str(line.trim_end());
            out.push('\n');
        }
        for n in notes {
            out.push_str(&n);
            out.push('\n');
        }
        out
    }

    /// One row per stratum; estimate columns are empty when unavailable.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "stratum", "date_old", "date_new", "old_median", "old_lower", "old_upper", "new_median", "new_lower",
            "new_upper", "change_median", "change_lower", "change_upper", "change_excluded", "clipped", "note",
        ])?;
        let f = |v: f64| format!("{v:.6}");
        for r in &self.rows {
            let mut rec = vec![r.stratum().to_string(), self.date_old.to_string(), self.date_new.to_string()];
            match r {
                PeakRow::Estimated { old, new, change, .. } => {
                    for v in [old.median, old.lower, old.upper, new.median, new.lower, new.upper, change.median, change.lower, change.upper] {
                        rec.push(f(v));
                    }
                    rec.push(change.excluded.to_string());
                    rec.push((old.clipped || new.clipped).to_string());
                    rec.push(String::new());
                }
                PeakRow::Unavailable { reason, .. } => {
                    rec.extend(std::iter::repeat_n(String::new(), 11));
                    rec.push(reason.clone());
                }
            }
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}
