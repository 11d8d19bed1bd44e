//! Output files are written to a temporary sibling and renamed into place,
//! so a failed run never leaves a truncated artifact behind.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{CliError, CliResult, Kind};

fn io_error(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::new(Kind::Data, "write", format!("{}: {e}", path.display()))
}

/// Hands `fill` a temporary sibling of `path` and renames it into place
/// once `fill` succeeds.
pub fn write_via_temp(path: &Path, fill: impl FnOnce(&Path) -> CliResult<()>) -> CliResult<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| io_error(dir, e))?;
    }
    let mut tmp = PathBuf::from(path);
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    tmp.set_file_name(format!(".{name}.tmp"));
    if let Err(e) = fill(&tmp) {
        let _ = fs::remove_file(&tmp);
        return Err(e);
    }
    fs::rename(&tmp, path).map_err(|e| io_error(path, e))
}

pub fn write_atomic(path: &Path, bytes: &[u8]) -> CliResult<()> {
    write_via_temp(path, |tmp| {
        let mut f = fs::File::create(tmp).map_err(|e| io_error(tmp, e))?;
        f.write_all(bytes).and_then(|_| f.sync_all()).map_err(|e| io_error(tmp, e))
    })
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut bytes = serde_json::to_vec_pretty(value).map_err(|e| io_error(path, e))?;
    bytes.push(b'\n');
    write_atomic(path, &bytes)
}

/// Serializes `rows` as a headered CSV.
pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> CliResult<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(|e| io_error(path, e))?;
    }
    let bytes = w.into_inner().map_err(|e| io_error(path, e))?;
    write_atomic(path, &bytes)
}

/// Headered CSV from explicit header and string rows (for dynamic columns).
pub fn write_table(path: &Path, header: &[String], rows: &[Vec<String>]) -> CliResult<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).map_err(|e| io_error(path, e))?;
    for r in rows {
        w.write_record(r).map_err(|e| io_error(path, e))?;
    }
    let bytes = w.into_inner().map_err(|e| io_error(path, e))?;
    write_atomic(path, &bytes)
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path, what: &str) -> CliResult<T> {
    let text = fs::read_to_string(path).map_err(|e| CliError::new(Kind::Data, "load", format!("{what} {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::new(Kind::Data, "load", format!("{what} {}: {e}", path.display())))
}
