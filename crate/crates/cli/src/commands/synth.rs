use std::fs;
use std::path::Path;

use hfrscope::synth::{
    generate_line_records, peak_dates, simpson_scenario, step_down_scenario, true_changes, write_florida_csv,
    SynthConfig,
};

use super::RunLog;
use crate::args::SynthArgs;
use crate::error::{CliError, CliResult};

pub fn load_scenario(arg: &str) -> CliResult<SynthConfig> {
    match arg {
        "step-down" => Ok(step_down_scenario()),
        "simpson" => Ok(simpson_scenario()),
        _ => {
            let path = Path::new(arg);
            if !path.exists() {
                return Err(CliError::Usage(format!(
                    "unknown scenario `{arg}` (expected step-down, simpson, or a JSON file)"
                )));
            }
            let text = fs::read_to_string(path).map_err(CliError::file(path))?;
            serde_json::from_str(&text).map_err(|source| CliError::Json { path: path.to_path_buf(), source })
        }
    }
}

pub fn run(args: &SynthArgs, log: &mut RunLog) -> CliResult<()> {
    let mut config = load_scenario(&args.scenario)?;
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    let (records, truth) = generate_line_records(&config)?;
    log.count("cases", records.len() as u64);
    log.write_with("cases.csv", |w| write_florida_csv(&records, w))?;
    log.write_with("truth.csv", |w| truth.write_csv(w))?;
    log.write_json("scenario.json", &config)?;
    let (d0, d1) = peak_dates();
    if let Some(ch) = true_changes(&config, d0, d1) {
        log.resolve("true_changes_between_peaks", &ch)?;
    }
    println!("{} cases, {} to {}", records.len(), config.start, config.end);
    Ok(())
}
