use std::collections::BTreeSet;

use chrono::{Days, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::record::{Dated, HasState, StateCode};

/// Cohort selection: an event-date window plus a maturity requirement
/// relative to the data vintage.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CohortFilter {
    pub start: NaiveDate,
    pub end: NaiveDate,
    pub maturity_days: u32,
    pub vintage: NaiveDate,
    #[serde(default)]
    pub excluded_states: BTreeSet<StateCode>,
}

pub fn default_window() -> (NaiveDate, NaiveDate) {
    (
        NaiveDate::from_ymd_opt(2020, 3, 26).unwrap(),
        NaiveDate::from_ymd_opt(2020, 11, 1).unwrap(),
    )
}

pub const DEFAULT_MATURITY_DAYS: u32 = 30;

impl CohortFilter {
    pub fn new(start: NaiveDate, end: NaiveDate, maturity_days: u32, vintage: NaiveDate) -> Result<Self> {
        if start > end {
            return Err(Error::InvalidArgument(format!("window start {start} after end {end}")));
        }
        Ok(CohortFilter { start, end, maturity_days, vintage, excluded_states: BTreeSet::new() })
    }

    pub fn with_excluded_states<I: IntoIterator<Item = StateCode>>(mut self, states: I) -> Self {
        self.excluded_states.extend(states);
        self
    }

    pub fn admits_date(&self, date: NaiveDate) -> bool {
        if date < self.start || date > self.end {
            return false;
        }
        match date.checked_add_days(Days::new(self.maturity_days as u64)) {
            Some(mature) => mature <= self.vintage,
            None => false,
        }
    }

    /// Dates that can pass the filter: the window, cut at `vintage - maturity_days`.
    /// `None` when no date is mature yet.
    pub fn effective_range(&self) -> Option<(NaiveDate, NaiveDate)> {
        let last_mature = self.vintage.checked_sub_days(Days::new(self.maturity_days as u64))?;
        let end = self.end.min(last_mature);
        (self.start <= end).then_some((self.start, end))
    }

    pub fn admits<T: Dated + HasState>(&self, rec: &T) -> bool {
        if let Some(s) = rec.state() {
            if self.excluded_states.contains(&s) {
                return false;
            }
        }
        self.admits_date(rec.event_date())
    }

    pub fn apply<T: Dated + HasState + Clone>(&self, records: &[T]) -> Vec<T> {
        let kept: Vec<T> = records.iter().filter(|r| self.admits(*r)).cloned().collect();
        if kept.is_empty() && !records.is_empty() {
            log::warn!("cohort filter kept no records");
        }
        kept
    }
}

/// Keep records with `start <= event_date <= end` and
/// `event_date + maturity_days <= data_vintage`.
pub fn filter_cohort<T: Dated + HasState + Clone>(
    records: &[T],
    window: (NaiveDate, NaiveDate),
    maturity_days: u32,
    data_vintage: NaiveDate,
) -> Result<Vec<T>> {
    let f = CohortFilter::new(window.0, window.1, maturity_days, data_vintage)?;
    Ok(f.apply(records))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::record::{Gender, LineRecord, AgeBand};

    fn d(y: i32, m: u32, day: u32) -> NaiveDate {
        NaiveDate::from_ymd_opt(y, m, day).unwrap()
    }

    fn rec(date: NaiveDate) -> LineRecord {
        LineRecord {
            event_date: date,
            age_band: AgeBand::A40_49,
            gender: Gender::Female,
            hospitalized: false,
            died: false,
            state: StateCode::new("NY"),
        }
    }

    #[test]
    fn effective_range_cuts_immature_days() {
        let f = CohortFilter::new(d(2020, 3, 26), d(2020, 11, 1), 30, d(2020, 9, 30)).unwrap();
        assert_eq!(f.effective_range(), Some((d(2020, 3, 26), d(2020, 8, 31))));
        assert!(f.admits_date(d(2020, 8, 31)) && !f.admits_date(d(2020, 9, 1)));
        let early = CohortFilter::new(d(2020, 3, 26), d(2020, 11, 1), 30, d(2020, 4, 1)).unwrap();
        assert_eq!(early.effective_range(), None);
    }

    #[test]
    fn window_boundaries() {
        let (s, e) = default_window();
        let f = CohortFilter::new(s, e, 30, d(2020, 12, 4)).unwrap();
        assert!(!f.admits(&rec(d(2020, 11, 2))));
        assert!(f.admits(&rec(d(2020, 11, 1))));
        assert!(f.admits(&rec(d(2020, 3, 26))));
        assert!(!f.admits(&rec(d(2020, 3, 25))));
    }

    #[test]
    fn maturity_against_vintage() {
        let f = CohortFilter::new(d(2020, 1, 1), d(2020, 12, 31), 30, d(2020, 12, 4)).unwrap();
        assert!(f.admits_date(d(2020, 11, 4)));
        assert!(!f.admits_date(d(2020, 11, 5)));
    }

    #[test]
    fn excluded_states_drop_out() {
        let f = CohortFilter::new(d(2020, 1, 1), d(2020, 12, 31), 0, d(2021, 1, 1))
            .unwrap()
            .with_excluded_states(StateCode::new("NY"));
        assert!(!f.admits(&rec(d(2020, 6, 1))));
    }

    #[test]
    fn inverted_window_is_an_error() {
        assert!(CohortFilter::new(d(2020, 2, 1), d(2020, 1, 1), 0, d(2020, 3, 1)).is_err());
    }
}
