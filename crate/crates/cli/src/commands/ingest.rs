use std::fs::{self, File};
use std::io::BufReader;
use std::path::Path;

use hfrscope::ingest::{parse_stream, ParseOptions, QuarantineWriter, SchemaConfig};
use hfrscope::store::StoreWriter;

use super::RunLog;
use crate::args::IngestArgs;
use crate::error::{CliError, CliResult};

pub const STORE_FILE: &str = "records.hfrs";

/// A built-in name or a TOML file.
pub fn load_schema(arg: &str) -> CliResult<SchemaConfig> {
    if let Some(s) = SchemaConfig::builtin(arg) {
        return Ok(s);
    }
    let path = Path::new(arg);
    if !path.exists() {
        return Err(CliError::Usage(format!("unknown schema `{arg}` (expected florida, cdc, or a TOML file)")));
    }
    let text = fs::read_to_string(path).map_err(CliError::file(path))?;
    Ok(SchemaConfig::from_toml(&text)?)
}

pub fn run(args: &IngestArgs, log: &mut RunLog) -> CliResult<()> {
    let mut schema = load_schema(&args.schema)?;
    schema.use_alternate_date |= args.use_alternate_date;
    log.resolve("schema", &schema)?;
    log.input(&args.input)?;

    let input = File::open(&args.input).map_err(CliError::file(&args.input))?;
    let delimiter = schema.delimiter_byte();
    let opts = ParseOptions::new(schema);
    let mut quarantine = QuarantineWriter::new(log.create("quarantine.csv")?, delimiter);
    let mut store = StoreWriter::new(log.create(STORE_FILE)?)?;

    let report = parse_stream(BufReader::new(input), &opts, Some(&mut quarantine), |raw| store.push(&raw.recode()))?;
    store.finish()?;
    quarantine.into_inner()?;

    for w in &report.warnings {
        log::warn!("{w}");
    }
    log.count("total_rows", report.total_rows);
    log.count("kept_rows", report.kept_rows);
    log.count("rejected_rows", report.rejected_total());
    log.write_json("ingest_report.json", &report)?;
    println!(
        "{}: {} rows, {} kept, {} rejected",
        args.input.display(),
        report.total_rows,
        report.kept_rows,
        report.rejected_total()
    );
    for (reason, n) in &report.rejected_rows_by_reason {
        println!("  {reason}: {n}");
    }
    Ok(())
}
