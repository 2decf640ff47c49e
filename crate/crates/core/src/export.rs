//! CSV and JSON writers with fixed column order.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ExportError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// A flat row type. `COLUMNS` must list the serialized fields in order.
pub trait CsvRecord: Serialize {
    const COLUMNS: &'static [&'static str];
}

/// Header row followed by one line per record; an empty slice yields the
/// header alone.
pub fn write_csv<R: CsvRecord, W: Write>(rows: &[R], out: W) -> csv::Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(R::COLUMNS)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

fn create(path: &Path) -> Result<BufWriter<File>, ExportError> {
    let io = |source| ExportError::Io { path: path.display().to_string(), source };
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(io)?;
    }
    File::create(path).map(BufWriter::new).map_err(io)
}

pub fn write_csv_file<R: CsvRecord>(rows: &[R], path: &Path) -> Result<(), ExportError> {
    write_csv(rows, create(path)?)?;
    Ok(())
}

/// Pretty-printed JSON with a trailing newline.
pub fn write_json_file<T: Serialize + ?Sized>(value: &T, path: &Path) -> Result<(), ExportError> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n").map_err(|source| ExportError::Io { path: path.display().to_string(), source })?;
    w.flush().map_err(|source| ExportError::Io { path: path.display().to_string(), source })?;
    Ok(())
}

/// One JSON document per line.
pub fn write_json_lines<T: Serialize, W: Write>(items: &[T], mut w: W) -> Result<(), ExportError> {
    let io = |source| ExportError::Io { path: "<json lines>".into(), source };
    for item in items {
        serde_json::to_writer(&mut w, item)?;
        w.write_all(b"\n").map_err(io)?;
    }
    w.flush().map_err(io)?;
    Ok(())
}

pub fn write_json_lines_file<T: Serialize>(items: &[T], path: &Path) -> Result<(), ExportError> {
    write_json_lines(items, create(path)?)
}
