//! Streaming parser for line-level case files.
//!
//! Rows are read in batches; each batch is converted in parallel and then
//! merged in input order, so results and tallies are identical to a
//! sequential pass while memory stays bounded by the batch size.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{BufRead, BufReader, Read, Write};

use flate2::read::MultiGzDecoder;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::schema::{ResolvedSchema, SchemaConfig};
use crate::error::{Error, Result};
use crate::record::{AgeBand, AgeRaw, ConfirmationKind, OutcomeRaw, RawLineRecord, StateCode};

pub const DEFAULT_BATCH_SIZE: usize = 64 * 1024;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectReason {
    BadDate,
    MissingDate,
    NotLabConfirmed,
    MalformedRow,
    BadCategory,
}

impl RejectReason {
    pub fn label(self) -> &'static str {
        match self {
            RejectReason::BadDate => "bad_date",
            RejectReason::MissingDate => "missing_date",
            RejectReason::NotLabConfirmed => "not_lab_confirmed",
            RejectReason::MalformedRow => "malformed_row",
            RejectReason::BadCategory => "bad_category",
        }
    }
}

impl fmt::Display for RejectReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Counts per outcome category.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutcomeTally {
    pub yes: u64,
    pub no: u64,
    pub unknown: u64,
    pub missing: u64,
}

impl OutcomeTally {
    pub fn add(&mut self, raw: OutcomeRaw) {
        match raw {
            OutcomeRaw::Yes => self.yes += 1,
            OutcomeRaw::No => self.no += 1,
            OutcomeRaw::Unknown => self.unknown += 1,
            OutcomeRaw::Missing => self.missing += 1,
        }
    }

    pub fn total(&self) -> u64 {
        self.yes + self.no + self.unknown + self.missing
    }

    /// Rows that recode to `false`.
    pub fn recoded_no(&self) -> u64 {
        self.no + self.unknown + self.missing
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct IngestReport {
    pub total_rows: u64,
    pub kept_rows: u64,
    pub rejected_rows_by_reason: BTreeMap<RejectReason, u64>,
    pub hospitalization_tally: OutcomeTally,
    pub death_tally: OutcomeTally,
    pub excluded_states: Vec<StateCode>,
    /// Negative increments clamped to zero while loading testing aggregates.
    pub clamped_values: u64,
    pub warnings: Vec<String>,
}

impl IngestReport {
    pub fn rejected_total(&self) -> u64 {
        self.rejected_rows_by_reason.values().sum()
    }

    pub fn rejected(&self, reason: RejectReason) -> u64 {
        self.rejected_rows_by_reason.get(&reason).copied().unwrap_or(0)
    }

    pub fn is_conserved(&self) -> bool {
        self.total_rows == self.kept_rows + self.rejected_total()
    }

    fn keep(&mut self, rec: &RawLineRecord) {
        self.total_rows += 1;
        self.kept_rows += 1;
        self.hospitalization_tally.add(rec.hospitalized);
        self.death_tally.add(rec.died);
    }

    fn reject(&mut self, reason: RejectReason) {
        self.total_rows += 1;
        *self.rejected_rows_by_reason.entry(reason).or_insert(0) += 1;
    }
}

/// Receives rejected rows, e.g. to spill them to a quarantine file.
pub trait QuarantineSink {
    fn header(&mut self, header: &csv::StringRecord) -> Result<()>;
    fn reject(&mut self, row: &csv::StringRecord, reason: RejectReason) -> Result<()>;
}

/// Writes rejected rows in the input's delimiter format with a trailing `reason` column.
pub struct QuarantineWriter<W: Write> {
    inner: csv::Writer<W>,
}

impl<W: Write> QuarantineWriter<W> {
    pub fn new(writer: W, delimiter: u8) -> Self {
        let inner = csv::WriterBuilder::new()
            .delimiter(delimiter)
            .flexible(true)
            .from_writer(writer);
        QuarantineWriter { inner }
    }

    pub fn into_inner(self) -> Result<W> {
        self.inner
            .into_inner()
            .map_err(|e| Error::Io(std::io::Error::other(e.to_string())))
    }
}

impl<W: Write> QuarantineSink for QuarantineWriter<W> {
    fn header(&mut self, header: &csv::StringRecord) -> Result<()> {
        let mut row: Vec<&str> = header.iter().collect();
        row.push("reason");
        self.inner.write_record(&row)?;
        Ok(())
    }

    fn reject(&mut self, row: &csv::StringRecord, reason: RejectReason) -> Result<()> {
        let mut fields: Vec<&str> = row.iter().collect();
        fields.push(reason.label());
        self.inner.write_record(&fields)?;
        Ok(())
    }
}

/// Wrap a reader, transparently decompressing gzip input.
pub fn open_maybe_gzip<'a, R: Read + 'a>(reader: R) -> Result<Box<dyn Read + 'a>> {
    let mut buf = BufReader::new(reader);
    let head = buf.fill_buf()?;
    if head.len() >= 2 && head[0] == 0x1f && head[1] == 0x8b {
        Ok(Box::new(MultiGzDecoder::new(buf)))
    } else {
        Ok(Box::new(buf))
    }
}

#[derive(Debug, Clone)]
pub struct ParseOptions {
    pub schema: SchemaConfig,
    pub batch_size: usize,
}

impl ParseOptions {
    pub fn new(schema: SchemaConfig) -> Self {
        ParseOptions { schema, batch_size: DEFAULT_BATCH_SIZE }
    }
}

/// Parse a line-level file, handing each kept record to `sink` in input order.
pub fn parse_stream<R, F>(
    reader: R,
    opts: &ParseOptions,
    mut quarantine: Option<&mut dyn QuarantineSink>,
    mut sink: F,
) -> Result<IngestReport>
where
    R: Read,
    F: FnMut(RawLineRecord) -> Result<()>,
{
    opts.schema.validate()?;
    let schema = &opts.schema;
    let input = open_maybe_gzip(reader)?;
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(schema.delimiter_byte())
        .has_headers(true)
        .flexible(true)
        .from_reader(input);
    let header = rdr.headers()?.clone();
    let resolved = schema.resolve(&header)?;
    if let Some(q) = quarantine.as_deref_mut() {
        q.header(&header)?;
    }

    let batch_size = opts.batch_size.max(1);
    let mut report = IngestReport::default();
    let mut batch: Vec<std::result::Result<csv::StringRecord, ()>> = Vec::with_capacity(batch_size);
    let mut row = csv::StringRecord::new();
    loop {
        let done = match rdr.read_record(&mut row) {
            Ok(true) => {
                batch.push(Ok(row.clone()));
                false
            }
            Ok(false) => true,
            Err(e) if e.is_io_error() => return Err(e.into()),
            Err(_) => {
                batch.push(Err(()));
                false
            }
        };
        if batch.len() >= batch_size || (done && !batch.is_empty()) {
            let converted: Vec<std::result::Result<RawLineRecord, RejectReason>> = batch
                .par_iter()
                .map(|r| match r {
                    Ok(r) => convert_row(schema, &resolved, r),
                    Err(()) => Err(RejectReason::MalformedRow),
                })
                .collect();
            for (src, out) in batch.iter().zip(converted) {
                match out {
                    Ok(rec) => {
                        report.keep(&rec);
                        sink(rec)?;
                    }
                    Err(reason) => {
                        report.reject(reason);
                        if let Some(q) = quarantine.as_deref_mut() {
                            match src {
                                Ok(r) => q.reject(r, reason)?,
                                Err(()) => q.reject(&csv::StringRecord::new(), reason)?,
                            }
                        }
                    }
                }
            }
            batch.clear();
        }
        if done {
            break;
        }
    }
    if report.total_rows == 0 {
        report.warnings.push("input contains no data rows".into());
    }
    Ok(report)
}

/// Parse a whole file into memory.
pub fn parse_lines<R: Read>(
    reader: R,
    opts: &ParseOptions,
) -> Result<(Vec<RawLineRecord>, IngestReport)> {
    let mut out = Vec::new();
    let report = parse_stream(reader, opts, None, |r| {
        out.push(r);
        Ok(())
    })?;
    Ok((out, report))
}

/// Parse a Florida case line file; the event date is the confirmation date column.
pub fn parse_florida_lines<R: Read>(
    reader: R,
    opts: &ParseOptions,
) -> Result<(Vec<RawLineRecord>, IngestReport)> {
    parse_lines(reader, opts)
}

/// Parse a national surveillance file; non lab-confirmed rows are rejected.
pub fn parse_cdc_lines<R: Read>(
    reader: R,
    opts: &ParseOptions,
) -> Result<(Vec<RawLineRecord>, IngestReport)> {
    if opts.schema.columns.confirmation.is_none() {
        return Err(Error::SchemaConfig(
            "national schema requires a confirmation status column".into(),
        ));
    }
    parse_lines(reader, opts)
}

fn convert_row(
    schema: &SchemaConfig,
    cols: &ResolvedSchema,
    row: &csv::StringRecord,
) -> std::result::Result<RawLineRecord, RejectReason> {
    if row.len() != cols.width {
        return Err(RejectReason::MalformedRow);
    }
    let field = |i: usize| row.get(i).unwrap_or("");

    let confirmation = match cols.confirmation {
        Some(i) => schema.classify_confirmation(field(i)),
        None => ConfirmationKind::PcrPositive,
    };
    if confirmation != ConfirmationKind::PcrPositive {
        return Err(RejectReason::NotLabConfirmed);
    }

    let date_text = field(cols.event_date).trim();
    if date_text.is_empty() {
        return Err(RejectReason::MissingDate);
    }
    let event_date = schema.parse_date(date_text).ok_or(RejectReason::BadDate)?;

    let hospitalized = schema
        .classify_outcome(field(cols.hospitalized))
        .ok_or(RejectReason::BadCategory)?;
    let died = schema.classify_outcome(field(cols.died)).ok_or(RejectReason::BadCategory)?;
    let gender = schema.classify_gender(field(cols.gender)).ok_or(RejectReason::BadCategory)?;
    let state = cols.state.and_then(|i| StateCode::new(field(i)));

    Ok(RawLineRecord {
        event_date,
        age: parse_age(field(cols.age)),
        gender,
        hospitalized,
        died,
        state,
        confirmation,
    })
}

/// Integer years (`"37"`) or a band label with a leading lower bound
/// (`"30 - 39 Years"`, `"80+"`); anything else is unknown.
pub fn parse_age(value: &str) -> AgeRaw {
    let v = value.trim();
    let digits: &str = &v[..v.bytes().take_while(|b| b.is_ascii_digit()).count()];
    if digits.is_empty() {
        return AgeRaw::Unknown;
    }
    let Ok(n) = digits.parse::<u32>() else {
        return AgeRaw::Unknown;
    };
    if digits.len() == v.len() {
        AgeRaw::Years(n)
    } else if v[digits.len()..].trim_start().starts_with(['-', '+', ' ']) {
        AgeRaw::Band(AgeBand::from_years(n))
    } else {
        // e.g. "37.5" or "5 months": treat the leading integer as years
        AgeRaw::Years(n)
    }
}
