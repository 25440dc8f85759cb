mod args;
mod commands;
mod error;
mod manifest;

use std::fs;
use std::path::{self, Path, PathBuf};
use std::process::ExitCode;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use clap::Parser;

use args::{Cli, Command, ReportArgs};
use commands::RunLog;
use error::{CliError, CliResult};
use manifest::RunManifest;

fn init_logging(verbose: u8) {
    let level = match verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new()
        .filter_level(level)
        .parse_env("HFRSCOPE_LOG")
        .format_timestamp(None)
        .format_target(false)
        .init();
}

fn absolute(p: &mut PathBuf) -> CliResult<()> {
    *p = path::absolute(&*p).map_err(CliError::file(p))?;
    Ok(())
}

/// Schema and scenario arguments are names or paths; only paths are rewritten.
fn absolute_if_file(arg: &mut String) -> CliResult<()> {
    let p = Path::new(arg.as_str());
    if p.is_file() {
        *arg = path::absolute(p).map_err(CliError::file(p))?.display().to_string();
    }
    Ok(())
}

/// Make every path absolute so the manifest can be replayed from any directory.
fn absolutize(cmd: &mut Command) -> CliResult<()> {
    match cmd {
        Command::Ingest(a) => {
            absolute(&mut a.input)?;
            absolute_if_file(&mut a.schema)?;
            absolute(&mut a.out)
        }
        Command::Analyze(a) => {
            absolute(&mut a.cohort.store)?;
            if let Some(t) = a.testing.as_mut() {
                absolute(t)?;
            }
            absolute(&mut a.out)
        }
        Command::Bootstrap(a) => {
            absolute(&mut a.cohort.store)?;
            absolute(&mut a.out)
        }
        Command::Synth(a) => {
            absolute_if_file(&mut a.scenario)?;
            absolute(&mut a.out)
        }
        Command::Report(_) => Ok(()),
    }
}

fn replay(args: &ReportArgs) -> CliResult<Command> {
    let m = RunManifest::read(&args.manifest)?;
    if m.version != env!("CARGO_PKG_VERSION") {
        log::warn!("manifest written by version {}, replaying with {}", m.version, env!("CARGO_PKG_VERSION"));
    }
    let mut cmd = m.command;
    if matches!(cmd, Command::Report(_)) {
        return Err(CliError::Usage("manifest records a report run; nothing to replay".into()));
    }
    if let Some(out) = &args.out {
        cmd.set_out_dir(out.clone());
    }
    log::info!("replaying `{}` from {}", cmd.name(), args.manifest.display());
    Ok(cmd)
}

fn run(cmd: Command) -> CliResult<ExitCode> {
    let mut cmd = match cmd {
        Command::Report(a) => replay(&a)?,
        c => c,
    };
    absolutize(&mut cmd)?;
    let out = cmd.out_dir().cloned().ok_or_else(|| CliError::Usage("no output directory".into()))?;
    fs::create_dir_all(&out).map_err(CliError::file(&out))?;

    let started_unix = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    let clock = Instant::now();
    let mut log = RunLog::new(out.clone());
    match &cmd {
        Command::Ingest(a) => commands::ingest::run(a, &mut log)?,
        Command::Analyze(a) => commands::analyze::run(a, &mut log)?,
        Command::Bootstrap(a) => commands::bootstrap::run(a, &mut log)?,
        Command::Synth(a) => commands::synth::run(a, &mut log)?,
        Command::Report(_) => unreachable!("report is replaced by the recorded command"),
    }
    let insufficient = log.insufficient.take();
    let manifest = RunManifest {
        tool: env!("CARGO_BIN_NAME").to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        command: cmd,
        inputs: log.inputs,
        outputs: log.outputs,
        row_counts: log.row_counts,
        resolved: serde_json::Value::Object(log.resolved),
        started_unix,
        wall_clock_ms: clock.elapsed().as_millis() as u64,
    };
    manifest.write(&out)?;
    match insufficient {
        Some(msg) => {
            eprintln!("insufficient data: {msg}");
            Ok(ExitCode::from(3))
        }
        None => Ok(ExitCode::SUCCESS),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    init_logging(cli.verbose);
    match run(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
