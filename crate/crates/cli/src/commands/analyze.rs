use std::fs::File;
use std::io::BufReader;

use hfrscope::cohort::{
    age_distribution_shares, gender_fraction_series, summarize_demographics, CohortTable, Signal, StratumKey,
    GENDER_MIN_DENOMINATOR,
};
use hfrscope::ingest::{load_testing_series, Region, TestingSchema};
use hfrscope::signals::{cfr_series, hfr_series, positive_test_rate, write_rate_csv, RateSeries};

use super::{prepare, RunLog};
use crate::args::{AnalyzeArgs, RegionArg};
use crate::error::{CliError, CliResult};

const SHARE_SIGNALS: [(Signal, &str); 3] =
    [(Signal::Cases, "cases"), (Signal::Hospitalizations, "hospitalizations"), (Signal::Deaths, "deaths")];

pub fn cfr_all(table: &CohortTable) -> hfrscope::Result<Vec<RateSeries>> {
    StratumKey::all().into_iter().map(|k| cfr_series(table, k)).collect()
}

pub fn hfr_all(table: &CohortTable, min_deaths: u64) -> hfrscope::Result<Vec<RateSeries>> {
    StratumKey::all().into_iter().map(|k| hfr_series(table, k, min_deaths)).collect()
}

pub fn run(args: &AnalyzeArgs, log: &mut RunLog) -> CliResult<()> {
    let prep = prepare(&args.cohort, log)?;
    let table = &prep.table;

    log.write_with("cohort.csv", |w| table.write_csv(w))?;
    let demo = summarize_demographics(&prep.records);
    let text = demo.render_text();
    log.write_text("demographics.txt", &text)?;
    log.write_with("demographics.csv", |w| demo.write_csv(w))?;
    print!("{text}");

    let cfr = cfr_all(table)?;
    log.write_with("cfr.csv", |w| write_rate_csv(w, &cfr))?;
    let hfr = hfr_all(table, args.cohort.min_deaths)?;
    log.write_with("hfr.csv", |w| write_rate_csv(w, &hfr))?;
    for (signal, name) in SHARE_SIGNALS {
        let shares = age_distribution_shares(table, signal)?;
        log.write_with(&format!("age_shares_{name}.csv"), |w| write_rate_csv(w, &shares))?;
        let frac = gender_fraction_series(table, signal, GENDER_MIN_DENOMINATOR)?;
        log.write_with(&format!("female_fraction_{name}.csv"), |w| write_rate_csv(w, &frac))?;
    }

    match &args.testing {
        Some(path) => {
            let region = match args.testing_region {
                RegionArg::Florida => Region::Florida,
                RegionArg::National => Region::National,
            };
            log.input(path)?;
            let f = File::open(path).map_err(CliError::file(path))?;
            let (tests, report) = load_testing_series(BufReader::new(f), region, &TestingSchema::tracking_project(region))?;
            for w in &report.warnings {
                log::warn!("{w}");
            }
            log.count("testing_days", tests.len() as u64);
            log.write_json("testing_report.json", &report)?;
            let rate = positive_test_rate(&tests)?;
            log.write_with("pos_test_rate.csv", |w| write_rate_csv(w, std::slice::from_ref(&rate)))?;
        }
        None => {
            let note = "positive test rate skipped: no --testing file given\n";
            eprint!("note: {note}");
            log.write_text("notes.txt", note)?;
        }
    }
    Ok(())
}
