//! Cohort-based fatality rates from line-level COVID-19 case records.
//!
//! The pipeline runs in four stages:
//!
//! ```text
//! delimited files --ingest--> RawLineRecord --recode/filter--> LineRecord
//!     --cohort--> CohortTable --signals--> RateSeries (CFR, HFR, shares)
//!     --trend--> SplineFit + block-bootstrap IntervalEstimate / DropEstimate
//! ```
//!
//! [`synth`] generates line records with known hospitalization fatality
//! trends, so every stage can be checked end to end without real data.

pub mod cohort;
pub mod error;
pub mod ingest;
pub mod record;
pub mod report;
pub mod signals;
pub mod store;
pub mod synth;
pub mod trend;

pub use error::{Error, Result};
