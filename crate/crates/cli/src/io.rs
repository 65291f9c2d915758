//! Dataset CSV and atomic output files.

use std::io::Write;
use std::path::{Path, PathBuf};

use pairprobit::OrdinalDataset;
use serde::de::DeserializeOwned;
use serde::Serialize;
use tempfile::NamedTempFile;

use crate::error::{CliError, CliResult};

/// Reads a headerless CSV of 1-based integer categories. `K` defaults to the
/// largest category present.
pub fn read_dataset(path: &Path, k: Option<usize>) -> CliResult<OrdinalDataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?;
    let mut rows: Vec<Vec<i64>> = Vec::new();
    let mut width = None;
    for record in reader.records() {
        let record = record.map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?;
        let line = record.position().map_or(0, |p| p.line());
        if record.iter().all(str::is_empty) {
            continue;
        }
        let row = record
            .iter()
            .enumerate()
            .map(|(col, field)| {
                field.parse::<i64>().map_err(|_| {
                    CliError::usage(format!(
                        "{}, line {line}, column {}: '{field}' is not an integer category",
                        path.display(),
                        col + 1
                    ))
                })
            })
            .collect::<CliResult<Vec<_>>>()?;
        let expected = *width.get_or_insert(row.len());
        if row.len() != expected {
            return Err(CliError::usage(format!(
                "{}, line {line}: expected {expected} columns, found {}",
                path.display(),
                row.len()
            )));
        }
        if let Some(&v) = row.iter().find(|&&v| v < 1 || k.is_some_and(|k| v > k as i64)) {
            return Err(CliError::usage(format!(
                "{}, line {line}: category {v} outside 1..={}",
                path.display(),
                k.map_or("K".to_string(), |k| k.to_string())
            )));
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(CliError::usage(format!("{}: no observations", path.display())));
    }
    let k = match k {
        Some(k) => k,
        None => rows.iter().flatten().copied().max().unwrap_or(1) as usize,
    };
    Ok(OrdinalDataset::new(&rows, k)?)
}

pub fn dataset_csv(data: &OrdinalDataset) -> CliResult<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in data.rows() {
        w.write_record(row.iter().map(|v| v.to_string()))
            .map_err(|e| CliError::runtime(e.to_string()))?;
    }
    w.into_inner().map_err(|e| CliError::runtime(e.to_string()))
}

pub fn json_bytes<T: Serialize>(value: &T) -> CliResult<Vec<u8>> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    Ok(bytes)
}

pub fn read_toml<T: DeserializeOwned>(path: &Path) -> CliResult<T> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))
}

/// `<path>.manifest.json`
pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".manifest.json");
    PathBuf::from(s)
}

/// Writes every file to a temporary sibling first and renames them into place
/// only after all writes succeeded.
pub fn write_all_atomic(files: &[(&Path, &[u8])]) -> CliResult<()> {
    let mut staged = Vec::with_capacity(files.len());
    for (path, bytes) in files {
        let dir = match path.parent() {
            Some(d) if !d.as_os_str().is_empty() => d,
            _ => Path::new("."),
        };
        let mut tmp = NamedTempFile::new_in(dir)
            .map_err(|e| CliError::runtime(format!("cannot create a file in {}: {e}", dir.display())))?;
        tmp.write_all(bytes)?;
        // Temporary files are created owner-only.
        #[cfg(unix)]
        {
            use std::os::unix::fs::PermissionsExt;
            tmp.as_file().set_permissions(std::fs::Permissions::from_mode(0o644))?;
        }
        tmp.as_file().sync_all()?;
        staged.push((tmp, *path));
    }
    for (tmp, path) in staged {
        tmp.persist(path)
            .map_err(|e| CliError::runtime(format!("cannot write {}: {}", path.display(), e.error)))?;
    }
    Ok(())
}
