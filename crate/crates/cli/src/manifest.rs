//! Run manifest: everything needed to repeat a run, plus what it produced.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::args::Command;
use crate::error::{CliError, CliResult};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputFile {
    pub path: PathBuf,
    pub bytes: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    /// The command as run, with paths made absolute and defaults filled in.
    pub command: Command,
    pub inputs: Vec<InputFile>,
    /// Output file names inside the output directory.
    pub outputs: Vec<String>,
    pub row_counts: BTreeMap<String, u64>,
    /// Settings derived while running (resolved vintage, strata, bootstrap config, ...).
    pub resolved: serde_json::Value,
    pub started_unix: u64,
    pub wall_clock_ms: u64,
}

impl RunManifest {
    pub fn write(&self, dir: &Path) -> CliResult<PathBuf> {
        let path = dir.join(MANIFEST_FILE);
        let text = serde_json::to_string_pretty(self).map_err(hfrscope::Error::from)?;
        fs::write(&path, text + "\n").map_err(CliError::file(&path))?;
        Ok(path)
    }

    pub fn read(path: &Path) -> CliResult<RunManifest> {
        let text = fs::read_to_string(path).map_err(CliError::file(path))?;
        serde_json::from_str(&text).map_err(|source| CliError::Json { path: path.to_path_buf(), source })
    }
}

pub fn input_file(path: &Path) -> CliResult<InputFile> {
    let meta = fs::metadata(path).map_err(CliError::file(path))?;
    Ok(InputFile { path: path.to_path_buf(), bytes: meta.len() })
}
