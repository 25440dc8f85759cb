use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand, ValueEnum};
use hfrscope::cohort::StratumKey;
use hfrscope::ingest::{default_window, DEFAULT_DUMP_FRACTION, DEFAULT_MATURITY_DAYS};
use hfrscope::record::StateCode;
use hfrscope::signals::DEFAULT_MIN_DEATHS;
use hfrscope::trend::DEFAULT_BLOCK_LENGTH;
use serde::{Deserialize, Serialize};

#[derive(Debug, Parser)]
#[command(name = "hfrscope", version, about = "Cohort CFR/HFR analysis of line-level COVID-19 case data")]
pub struct Cli {
    /// Log progress to stderr (repeat for more detail).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Subcommand, Serialize, Deserialize)]
#[serde(tag = "subcommand", rename_all = "snake_case")]
pub enum Command {
    /// Parse a line-level file into a normalized record store.
    Ingest(IngestArgs),
    /// Cohort tables, rate series, shares and demographics.
    Analyze(AnalyzeArgs),
    /// Spline trends with block-bootstrap intervals; peak-to-peak tables.
    Bootstrap(BootstrapArgs),
    /// Generate a synthetic Florida-layout case file with known truth.
    Synth(SynthArgs),
    /// Re-run a previous run from its manifest.
    Report(ReportArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Ingest(_) => "ingest",
            Command::Analyze(_) => "analyze",
            Command::Bootstrap(_) => "bootstrap",
            Command::Synth(_) => "synth",
            Command::Report(_) => "report",
        }
    }

    pub fn out_dir(&self) -> Option<&PathBuf> {
        match self {
            Command::Ingest(a) => Some(&a.out),
            Command::Analyze(a) => Some(&a.out),
            Command::Bootstrap(a) => Some(&a.out),
            Command::Synth(a) => Some(&a.out),
            Command::Report(a) => a.out.as_ref(),
        }
    }

    pub fn set_out_dir(&mut self, dir: PathBuf) {
        match self {
            Command::Ingest(a) => a.out = dir,
            Command::Analyze(a) => a.out = dir,
            Command::Bootstrap(a) => a.out = dir,
            Command::Synth(a) => a.out = dir,
            Command::Report(a) => a.out = Some(dir),
        }
    }
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct IngestArgs {
    /// Line-level CSV file, optionally gzip-compressed.
    #[arg(long)]
    pub input: PathBuf,
    /// `florida`, `cdc`, or a path to a TOML schema file.
    #[arg(long, default_value = "florida")]
    pub schema: String,
    /// Use the schema's alternate date column (positive specimen date for `cdc`).
    #[arg(long)]
    pub use_alternate_date: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct CohortArgs {
    /// Record store written by `ingest`.
    #[arg(long)]
    pub store: PathBuf,
    #[arg(long, default_value_t = Window::default())]
    pub window: Window,
    #[arg(long, default_value_t = DEFAULT_MATURITY_DAYS)]
    pub maturity_days: u32,
    /// Data vintage for the maturity rule; defaults to the latest event date in the store.
    #[arg(long)]
    pub vintage: Option<NaiveDate>,
    /// Comma-separated state codes to drop.
    #[arg(long, value_delimiter = ',', value_parser = parse_state)]
    pub exclude_states: Vec<StateCode>,
    /// Also drop states whose cases pile up on one or two dates.
    #[arg(long)]
    pub auto_exclude: bool,
    /// Share of a state's cases on its top two dates that counts as a dump.
    #[arg(long, default_value_t = DEFAULT_DUMP_FRACTION)]
    pub dump_fraction: f64,
    /// HFR is undefined where the 7-day hospitalized-death count is below this.
    #[arg(long, default_value_t = DEFAULT_MIN_DEATHS)]
    pub min_deaths: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegionArg {
    Florida,
    National,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct AnalyzeArgs {
    #[command(flatten)]
    pub cohort: CohortArgs,
    /// Daily testing file (COVID Tracking Project layout) for the positive test rate.
    #[arg(long)]
    pub testing: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = RegionArg::Florida)]
    pub testing_region: RegionArg,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResidualsArg {
    LeaveBlockOut,
    Fitted,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchemeArg {
    Moving,
    NonOverlapping,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct BootstrapArgs {
    #[command(flatten)]
    pub cohort: CohortArgs,
    /// Block length in days.
    #[arg(long, default_value_t = DEFAULT_BLOCK_LENGTH)]
    pub blocks: usize,
    #[arg(long, default_value_t = 1000)]
    pub replicates: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Date pair `OLD,NEW`; repeat for several tables. Defaults to the peaks
    /// (04-15, 07-15) and the window ends (04-01, 11-01) of 2020.
    #[arg(long, value_parser = parse_pair)]
    pub dates: Vec<DatePair>,
    /// Comma-separated strata such as `aggregate,60-69,80+/female`.
    #[arg(long, value_delimiter = ',')]
    pub strata: Vec<StratumKey>,
    /// Restrict the default strata to one gender.
    #[arg(long, value_enum)]
    pub gender: Option<GenderArg>,
    /// `cv` (leave-block-out), `gcv`, or a fixed value.
    #[arg(long, default_value = "cv")]
    pub lambda: LambdaArg,
    #[arg(long, value_enum, default_value_t = ResidualsArg::LeaveBlockOut)]
    pub residuals: ResidualsArg,
    #[arg(long, value_enum, default_value_t = SchemeArg::Moving)]
    pub scheme: SchemeArg,
    /// Re-select the smoothing parameter on every replicate.
    #[arg(long)]
    pub reselect_lambda: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GenderArg {
    Female,
    Male,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct SynthArgs {
    /// `step-down`, `simpson`, or a path to a JSON scenario file.
    #[arg(long, default_value = "step-down")]
    pub scenario: String,
    /// Override the scenario's seed.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct ReportArgs {
    /// `manifest.json` written by a previous run.
    #[arg(long)]
    pub manifest: PathBuf,
    /// Write outputs here instead of the recorded output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Inclusive date window written `START..END`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Window {
    pub start: NaiveDate,
    pub end: NaiveDate,
}

impl Default for Window {
    fn default() -> Self {
        let (start, end) = default_window();
        Window { start, end }
    }
}

impl fmt::Display for Window {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}..{}", self.start, self.end)
    }
}

impl FromStr for Window {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let (a, b) = s.split_once("..").ok_or_else(|| format!("expected START..END, got `{s}`"))?;
        let start = parse_date(a)?;
        let end = parse_date(b)?;
        if start > end {
            return Err(format!("window start {start} is after end {end}"));
        }
        Ok(Window { start, end })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatePair {
    pub old: NaiveDate,
    pub new: NaiveDate,
}

fn parse_date(s: &str) -> Result<NaiveDate, String> {
    NaiveDate::parse_from_str(s.trim(), "%Y-%m-%d").map_err(|e| format!("bad date `{s}`: {e}"))
}

fn parse_pair(s: &str) -> Result<DatePair, String> {
    let (a, b) = s.split_once(',').ok_or_else(|| format!("expected OLD,NEW, got `{s}`"))?;
    Ok(DatePair { old: parse_date(a)?, new: parse_date(b)? })
}

fn parse_state(s: &str) -> Result<StateCode, String> {
    StateCode::new(s.trim()).ok_or_else(|| format!("bad state code `{s}`"))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LambdaArg {
    Cv,
    Gcv,
    Fixed(f64),
}

impl fmt::Display for LambdaArg {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LambdaArg::Cv => f.write_str("cv"),
            LambdaArg::Gcv => f.write_str("gcv"),
            LambdaArg::Fixed(v) => write!(f, "{v}"),
        }
    }
}

impl FromStr for LambdaArg {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim().to_ascii_lowercase().as_str() {
            "cv" => Ok(LambdaArg::Cv),
            "gcv" => Ok(LambdaArg::Gcv),
            other => match other.parse::<f64>() {
                Ok(v) if v.is_finite() && v >= 0.0 => Ok(LambdaArg::Fixed(v)),
                _ => Err(format!("expected `cv`, `gcv` or a non-negative number, got `{s}`")),
            },
        }
    }
}
