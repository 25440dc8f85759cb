//! Daily testing aggregates (new positives / new tests).

use std::collections::BTreeMap;
use std::io::Read;

use chrono::{Days, NaiveDate};
use serde::{Deserialize, Serialize};

use super::parse::{open_maybe_gzip, IngestReport, RejectReason};
use super::schema::parse_date_with;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Region {
    Florida,
    National,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DailyTestRecord {
    pub date: NaiveDate,
    pub new_positives: u64,
    pub new_tests: u64,
    pub region: Region,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestingSchema {
    pub date: String,
    pub positives: String,
    pub tests: String,
    /// Values are running totals that must be differenced.
    pub cumulative: bool,
    #[serde(default)]
    pub state_column: Option<String>,
    /// Keep only rows whose state column equals this value.
    #[serde(default)]
    pub state_filter: Option<String>,
    pub date_formats: Vec<String>,
}

impl TestingSchema {
    /// COVID Tracking Project daily export layout.
    pub fn tracking_project(region: Region) -> TestingSchema {
        let (state_column, state_filter) = match region {
            Region::Florida => (Some("state".to_string()), Some("FL".to_string())),
            Region::National => (None, None),
        };
        TestingSchema {
            date: "date".into(),
            positives: "positive".into(),
            tests: "totalTestResults".into(),
            cumulative: true,
            state_column,
            state_filter,
            date_formats: vec!["%Y%m%d".into(), "%Y-%m-%d".into(), "%m/%d/%Y".into()],
        }
    }
}

fn parse_count(s: &str) -> Option<i64> {
    let t = s.trim();
    if t.is_empty() {
        return None;
    }
    t.parse::<i64>().ok().or_else(|| t.parse::<f64>().ok().filter(|v| v.is_finite()).map(|v| v.round() as i64))
}

/// Difference a dense running total; decreases are clamped to zero.
pub fn difference_cumulative(totals: &[i64], clamps: &mut u64) -> Vec<u64> {
    let mut prev = 0i64;
    totals
        .iter()
        .map(|&t| {
            let inc = t - prev;
            prev = prev.max(t);
            if inc < 0 {
                *clamps += 1;
                0
            } else {
                inc as u64
            }
        })
        .collect()
}

/// Load testing aggregates onto a dense daily grid. Rows sharing a date are summed.
pub fn load_testing_series<R: Read>(
    reader: R,
    region: Region,
    schema: &TestingSchema,
) -> Result<(Vec<DailyTestRecord>, IngestReport)> {
    let input = open_maybe_gzip(reader)?;
    let mut rdr = csv::ReaderBuilder::new().flexible(true).from_reader(input);
    let header = rdr.headers()?.clone();
    let col = |field: &'static str, name: &str| -> Result<usize> {
        header
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| Error::MissingColumn { field, column: name.to_string() })
    };
    let date_i = col("date", &schema.date)?;
    let pos_i = col("positives", &schema.positives)?;
    let test_i = col("tests", &schema.tests)?;
    let state_i = schema.state_column.as_deref().map(|c| col("state", c)).transpose()?;

    let mut report = IngestReport::default();
    let mut by_date: BTreeMap<NaiveDate, (i64, i64)> = BTreeMap::new();
    for row in rdr.records() {
        let row = match row {
            Ok(r) => r,
            Err(e) if e.is_io_error() => return Err(e.into()),
            Err(_) => {
                report.total_rows += 1;
                *report.rejected_rows_by_reason.entry(RejectReason::MalformedRow).or_insert(0) += 1;
                continue;
            }
        };
        if let (Some(i), Some(want)) = (state_i, schema.state_filter.as_deref()) {
            if !row.get(i).unwrap_or("").trim().eq_ignore_ascii_case(want) {
                continue;
            }
        }
        report.total_rows += 1;
        let Some(date) = parse_date_with(&schema.date_formats, row.get(date_i).unwrap_or("")) else {
            *report.rejected_rows_by_reason.entry(RejectReason::BadDate).or_insert(0) += 1;
            continue;
        };
        let p = parse_count(row.get(pos_i).unwrap_or("")).unwrap_or(0);
        let t = parse_count(row.get(test_i).unwrap_or("")).unwrap_or(0);
        let e = by_date.entry(date).or_insert((0, 0));
        e.0 += p;
        e.1 += t;
        report.kept_rows += 1;
    }

    let (Some(&first), Some(&last)) = (by_date.keys().next(), by_date.keys().next_back()) else {
        report.warnings.push("testing file has no usable rows".into());
        return Ok((Vec::new(), report));
    };
    let mut dates = Vec::new();
    let mut pos = Vec::new();
    let mut tests = Vec::new();
    let mut d = first;
    let (mut last_p, mut last_t) = (0i64, 0i64);
    while d <= last {
        let (p, t) = match by_date.get(&d) {
            Some(&v) => v,
            // gap: running totals carry forward, daily values are zero
            None if schema.cumulative => (last_p, last_t),
            None => (0, 0),
        };
        last_p = p;
        last_t = t;
        dates.push(d);
        pos.push(p);
        tests.push(t);
        d = d + Days::new(1);
    }

    let mut clamps = 0u64;
    let (pos_daily, test_daily): (Vec<u64>, Vec<u64>) = if schema.cumulative {
        (difference_cumulative(&pos, &mut clamps), difference_cumulative(&tests, &mut clamps))
    } else {
        let clamp = |v: &[i64], clamps: &mut u64| -> Vec<u64> {
            v.iter()
                .map(|&x| {
                    if x < 0 {
                        *clamps += 1;
                        0
                    } else {
                        x as u64
                    }
                })
                .collect()
        };
        (clamp(&pos, &mut clamps), clamp(&tests, &mut clamps))
    };

    let mut out = Vec::with_capacity(dates.len());
    for ((date, p), t) in dates.into_iter().zip(pos_daily).zip(test_daily) {
        let p = if p > t {
            clamps += 1;
            t
        } else {
            p
        };
        out.push(DailyTestRecord { date, new_positives: p, new_tests: t, region });
    }
    if clamps > 0 {
        report.warnings.push(format!("{clamps} testing values clamped"));
    }
    report.clamped_values = clamps;
    Ok((out, report))
}
