//! Detection of jurisdictions whose cases were bulk-reported on one or two dates.

use std::collections::{BTreeMap, HashMap};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::record::{Dated, HasState, StateCode};

pub const DEFAULT_DUMP_FRACTION: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArtifactEvidence {
    pub state: StateCode,
    pub total_cases: u64,
    /// The two busiest dates, busiest first.
    pub top_dates: Vec<(NaiveDate, u64)>,
    pub top_fraction: f64,
}

/// Per-state, per-date case counts accumulated in one pass.
#[derive(Debug, Default, Clone)]
pub struct ArtifactDetector {
    counts: BTreeMap<StateCode, HashMap<NaiveDate, u64>>,
}

impl ArtifactDetector {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, state: Option<StateCode>, date: NaiveDate) {
        if let Some(s) = state {
            *self.counts.entry(s).or_default().entry(date).or_insert(0) += 1;
        }
    }

    /// Every state with its top-two-date evidence, flagged or not.
    pub fn evidence(&self) -> Vec<ArtifactEvidence> {
        self.counts
            .iter()
            .map(|(state, by_date)| {
                let total: u64 = by_date.values().sum();
                let mut dates: Vec<(NaiveDate, u64)> = by_date.iter().map(|(d, c)| (*d, *c)).collect();
                // count descending, then date ascending, so ties are order independent
                dates.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
                dates.truncate(2);
                let top: u64 = dates.iter().map(|(_, c)| c).sum();
                ArtifactEvidence {
                    state: *state,
                    total_cases: total,
                    top_dates: dates,
                    top_fraction: if total == 0 { 0.0 } else { top as f64 / total as f64 },
                }
            })
            .collect()
    }

    pub fn flagged(&self, dump_fraction: f64) -> Result<Vec<ArtifactEvidence>> {
        check_fraction(dump_fraction)?;
        Ok(self
            .evidence()
            .into_iter()
            .filter(|e| e.total_cases > 0 && e.top_fraction >= dump_fraction)
            .collect())
    }
}

fn check_fraction(f: f64) -> Result<()> {
    if !(f > 0.0 && f <= 1.0) {
        return Err(Error::InvalidArgument(format!("dump_fraction {f} not in (0, 1]")));
    }
    Ok(())
}

/// Flag states where the two busiest event dates jointly hold at least
/// `dump_fraction` of the state's cases. Output is sorted by state code.
pub fn detect_reporting_artifacts<T: Dated + HasState>(
    records: &[T],
    dump_fraction: f64,
) -> Result<Vec<ArtifactEvidence>> {
    check_fraction(dump_fraction)?;
    let mut det = ArtifactDetector::new();
    for r in records {
        det.push(r.state(), r.event_date());
    }
    det.flagged(dump_fraction)
}
