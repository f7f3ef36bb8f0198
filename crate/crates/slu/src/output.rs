//! Report and table files.
//!
//! A report is written as `<stem>-<hash>.json` holding the command, the
//! config snapshot, its hash and the reproducible part of the
//! [`ExperimentReport`]. Wall-clock timings go to `<stem>-<hash>.timings.json`.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use slu_core::eval::ExperimentReport;

use crate::config::config_hash;
use crate::error::{Error, Result};

#[derive(Serialize)]
struct Envelope<'a> {
    command: &'a str,
    config_hash: &'a str,
    config: &'a serde_json::Value,
    report: &'a ExperimentReport,
}

#[derive(Serialize)]
struct Timings<'a> {
    command: &'a str,
    config_hash: &'a str,
    seconds: &'a std::collections::BTreeMap<String, f64>,
}

pub fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

/// Paths written for one report.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ReportFiles {
    pub report: PathBuf,
    pub timings: PathBuf,
    pub tables: Vec<PathBuf>,
}

/// Writes the report, its timings and, with `tables_as_csv`, one CSV per table.
pub fn write_report(
    dir: &Path,
    command: &str,
    snapshot: &serde_json::Value,
    report: &ExperimentReport,
    tables_as_csv: bool,
) -> Result<ReportFiles> {
    let hash = config_hash(snapshot);
    let stem = format!("{command}-{hash}");
    let mut reproducible = report.clone();
    let seconds = std::mem::take(&mut reproducible.timings);
    let envelope = Envelope { command, config_hash: &hash, config: snapshot, report: &reproducible };
    let report_path = dir.join(format!("{stem}.json"));
    let mut text = serde_json::to_string_pretty(&envelope).expect("reports serialize");
    text.push('\n');
    write_file(&report_path, text)?;

    let timings_path = dir.join(format!("{stem}.timings.json"));
    let timings = Timings { command, config_hash: &hash, seconds: &seconds };
    write_file(&timings_path, serde_json::to_string_pretty(&timings).expect("timings serialize") + "\n")?;

    let mut tables = Vec::new();
    if tables_as_csv {
        for (name, table) in &report.tables {
            let path = dir.join(format!("{stem}-{name}.csv"));
            write_file(&path, table.to_csv())?;
            tables.push(path);
        }
    }
    Ok(ReportFiles { report: report_path, timings: timings_path, tables })
}
