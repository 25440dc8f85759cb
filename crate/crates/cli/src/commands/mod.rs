pub mod analyze;
pub mod bootstrap;
pub mod ingest;
pub mod synth;

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use hfrscope::cohort::{build_cohort_table, CohortTable};
use hfrscope::ingest::{detect_reporting_artifacts, ArtifactEvidence, CohortFilter};
use hfrscope::record::LineRecord;
use hfrscope::store::read_store;
use serde::Serialize;

use crate::args::CohortArgs;
use crate::error::{CliError, CliResult};
use crate::manifest::{input_file, InputFile};

/// Everything a command reports back for the manifest.
#[derive(Debug)]
pub struct RunLog {
    pub out: PathBuf,
    pub inputs: Vec<InputFile>,
    pub outputs: Vec<String>,
    pub row_counts: BTreeMap<String, u64>,
    pub resolved: serde_json::Map<String, serde_json::Value>,
    /// Set when the run finished but nothing could be estimated.
    pub insufficient: Option<String>,
}

impl RunLog {
    pub fn new(out: PathBuf) -> RunLog {
        RunLog {
            out,
            inputs: Vec::new(),
            outputs: Vec::new(),
            row_counts: BTreeMap::new(),
            resolved: serde_json::Map::new(),
            insufficient: None,
        }
    }

    pub fn input(&mut self, path: &Path) -> CliResult<()> {
        self.inputs.push(input_file(path)?);
        Ok(())
    }

    pub fn count(&mut self, key: &str, n: u64) {
        self.row_counts.insert(key.to_string(), n);
    }

    pub fn resolve<T: Serialize>(&mut self, key: &str, value: &T) -> CliResult<()> {
        let v = serde_json::to_value(value).map_err(hfrscope::Error::from)?;
        self.resolved.insert(key.to_string(), v);
        Ok(())
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    /// Create `name` in the output directory and record it.
    pub fn create(&mut self, name: &str) -> CliResult<BufWriter<File>> {
        let path = self.path(name);
        let f = File::create(&path).map_err(CliError::file(&path))?;
        self.outputs.push(name.to_string());
        Ok(BufWriter::new(f))
    }

    pub fn write_with<F>(&mut self, name: &str, f: F) -> CliResult<()>
    where
        F: FnOnce(&mut BufWriter<File>) -> hfrscope::Result<()>,
    {
        let mut w = self.create(name)?;
        f(&mut w)?;
        let path = self.path(name);
        w.flush().map_err(CliError::file(&path))
    }

    pub fn write_text(&mut self, name: &str, text: &str) -> CliResult<()> {
        let path = self.path(name);
        fs::write(&path, text).map_err(CliError::file(&path))?;
        self.outputs.push(name.to_string());
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> CliResult<()> {
        let text = serde_json::to_string_pretty(value).map_err(hfrscope::Error::from)?;
        self.write_text(name, &(text + "\n"))
    }
}

pub fn load_store(path: &Path) -> CliResult<Vec<LineRecord>> {
    let f = File::open(path).map_err(CliError::file(path))?;
    Ok(read_store(BufReader::new(f))?)
}

/// A filtered cohort table ready for the signal stage.
pub struct Prepared {
    pub records: Vec<LineRecord>,
    pub table: CohortTable,
}

fn write_artifacts<W: Write>(evidence: &[ArtifactEvidence], out: W) -> hfrscope::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["state", "total_cases", "top_date_1", "count_1", "top_date_2", "count_2", "top_fraction"])?;
    for e in evidence {
        let top = |i: usize| {
            e.top_dates
                .get(i)
                .map(|(d, c)| (d.to_string(), c.to_string()))
                .unwrap_or_default()
        };
        let (d1, c1) = top(0);
        let (d2, c2) = top(1);
        w.write_record([e.state.to_string(), e.total_cases.to_string(), d1, c1, d2, c2, format!("{:.6}", e.top_fraction)])?;
    }
    w.flush()?;
    Ok(())
}

/// Load the store, resolve the vintage and excluded states, filter, and
/// build the cohort table over the dates that can pass the filter.
pub fn prepare(args: &CohortArgs, log: &mut RunLog) -> CliResult<Prepared> {
    log.input(&args.store)?;
    let all = load_store(&args.store)?;
    log.count("store_records", all.len() as u64);
    let Some(latest) = all.iter().map(|r| r.event_date).max() else {
        return Err(hfrscope::Error::InsufficientData("record store is empty".into()).into());
    };
    let vintage = args.vintage.unwrap_or(latest);

    let mut excluded = args.exclude_states.clone();
    if args.auto_exclude {
        let flagged = detect_reporting_artifacts(&all, args.dump_fraction)?;
        for e in &flagged {
            log::info!("{}: {:.0}% of cases on two dates, excluded", e.state, 100.0 * e.top_fraction);
        }
        log.write_with("artifacts.csv", |w| write_artifacts(&flagged, w))?;
        excluded.extend(flagged.iter().map(|e| e.state));
    }
    excluded.sort();
    excluded.dedup();

    let filter = CohortFilter::new(args.window.start, args.window.end, args.maturity_days, vintage)?
        .with_excluded_states(excluded);
    log.resolve("filter", &filter)?;
    let range = filter.effective_range().ok_or_else(|| {
        hfrscope::Error::InsufficientData(format!(
            "no event date in {}..{} is {} days older than vintage {vintage}",
            args.window.start, args.window.end, args.maturity_days
        ))
    })?;
    log.resolve("cohort_range", &range)?;
    let records = filter.apply(&all);
    log.count("cohort_records", records.len() as u64);
    let table = build_cohort_table(&records, range)?;
    Ok(Prepared { records, table })
}
