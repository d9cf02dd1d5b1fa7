//! Append-only JSON Lines results store.
//!
//! Appends take an exclusive advisory lock on `<store>.lock`, copy the current
//! store into a temporary file in the same directory, add the new record and
//! atomically rename it over the store. Readers therefore only ever observe
//! whole records, and concurrent appenders serialize on the lock.

use std::ffi::OsString;
use std::fs::{self, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use tempfile::NamedTempFile;

use super::{read_text, ConfigError};
use crate::orchestrator::CountReport;

fn lock_path(store: &Path) -> PathBuf {
    let mut name = OsString::from(store.as_os_str());
    name.push(".lock");
    PathBuf::from(name)
}

pub fn append_report(store: impl AsRef<Path>, report: &CountReport) -> Result<(), ConfigError> {
    let path = store.as_ref();
    let io_err = |e: io::Error| ConfigError::io(path, e);
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };

    let lock = OpenOptions::new()
        .create(true)
        .truncate(false)
        .write(true)
        .open(lock_path(path))
        .map_err(io_err)?;
    lock.lock().map_err(io_err)?;

    let existing = match fs::read(path) {
        Ok(bytes) => bytes,
        Err(e) if e.kind() == io::ErrorKind::NotFound => Vec::new(),
        Err(e) => return Err(io_err(e)),
    };
    let mut tmp = NamedTempFile::new_in(dir).map_err(io_err)?;
    tmp.write_all(&existing).map_err(io_err)?;
    if existing.last().is_some_and(|&b| b != b'\n') {
        tmp.write_all(b"\n").map_err(io_err)?;
    }
    tmp.write_all(report.to_canonical_line().as_bytes())
        .map_err(io_err)?;
    tmp.as_file().sync_all().map_err(io_err)?;
    tmp.persist(path).map_err(|e| io_err(e.error))?;
    // Dropping `lock` releases it.
    Ok(())
}

/// Every record in the store, in append order.
pub fn read_reports(store: impl AsRef<Path>) -> Result<Vec<CountReport>, ConfigError> {
    let text = read_text(store.as_ref())?;
    parse_lines(&text)
}

fn parse_lines(text: &str) -> Result<Vec<CountReport>, ConfigError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            let report: CountReport =
                serde_json::from_str(l).map_err(|e| ConfigError::MalformedLine {
                    line: i + 1,
                    detail: e.to_string(),
                })?;
            report.validate()?;
            Ok(report)
        })
        .collect()
}

/// Resolves `PATH` or `PATH#RUN_ID`. `PATH` may hold a single report document
/// or a results store; without a run id the last stored record is used.
pub fn load_report(spec: &str) -> Result<CountReport, ConfigError> {
    let (path, run_id) = match spec.rsplit_once('#') {
        Some((p, id)) if !id.is_empty() => (p, Some(id)),
        _ => (spec, None),
    };
    let text = read_text(Path::new(path))?;
    let records = match serde_json::from_str::<CountReport>(&text) {
        Ok(single) => {
            single.validate()?;
            vec![single]
        }
        Err(_) => parse_lines(&text)?,
    };
    match run_id {
        Some(id) => records.into_iter().find(|r| r.run_id == id).ok_or_else(|| {
            ConfigError::ReportNotFound {
                origin: path.to_string(),
                run_id: id.to_string(),
            }
        }),
        None => records
            .into_iter()
            .last()
            .ok_or_else(|| ConfigError::Malformed {
                origin: path.to_string(),
                detail: "no report records".into(),
            }),
    }
}
