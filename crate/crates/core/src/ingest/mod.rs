//! Parsing, recoding, cohort filtering and artifact detection for line-level files.

mod artifacts;
mod filter;
mod parse;
mod schema;
mod testing;

pub use artifacts::{detect_reporting_artifacts, ArtifactDetector, ArtifactEvidence, DEFAULT_DUMP_FRACTION};
pub use filter::{default_window, filter_cohort, CohortFilter, DEFAULT_MATURITY_DAYS};
pub use parse::{
    open_maybe_gzip, parse_age, parse_cdc_lines, parse_florida_lines, parse_lines, parse_stream,
    IngestReport, OutcomeTally, ParseOptions, QuarantineSink, QuarantineWriter, RejectReason,
    DEFAULT_BATCH_SIZE,
};
pub use schema::{parse_date_with, CategorySpellings, ColumnMap, ConfirmationSpellings, ResolvedSchema, SchemaConfig};
pub use testing::{difference_cumulative, load_testing_series, DailyTestRecord, Region, TestingSchema};

pub use crate::record::recode_outcome;
