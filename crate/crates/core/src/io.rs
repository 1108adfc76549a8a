//! Field and report files: CSV with a JSON sidecar, written atomically.
//!
//! A field stored at `u.csv` has its grid description in `u.json`. The CSV has
//! one row per grid point in row-major order with header
//! `index0,...,index{2n-1},value`; floats use the shortest representation that
//! parses back to the same bits.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{GridError, GridField, GridGeometry, Topology};

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Csv { path: PathBuf, source: csv::Error },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        source: serde_json::Error,
    },
    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
    #[error(transparent)]
    Grid(#[from] GridError),
}

pub type Result<T> = std::result::Result<T, IoError>;

/// Run-length encoded boolean mask: `runs` alternate starting with `start`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MaskRle {
    pub start: bool,
    pub runs: Vec<usize>,
}

impl MaskRle {
    pub fn encode(mask: &[bool]) -> Self {
        let start = mask.first().copied().unwrap_or(false);
        let mut runs = Vec::new();
        let mut current = start;
        let mut len = 0;
        for &b in mask {
            if b == current {
                len += 1;
            } else {
                runs.push(len);
                current = b;
                len = 1;
            }
        }
        if len > 0 {
            runs.push(len);
        }
        Self { start, runs }
    }

    pub fn decode(&self) -> Vec<bool> {
        let mut out = Vec::with_capacity(self.runs.iter().sum());
        let mut current = self.start;
        for &len in &self.runs {
            out.extend(std::iter::repeat_n(current, len));
            current = !current;
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldSidecar {
    pub topology: Topology,
    pub n: usize,
    pub shape: Vec<usize>,
    pub spacing: f64,
    pub origin: Vec<f64>,
    pub mask_rle: Option<MaskRle>,
}

impl FieldSidecar {
    pub fn of(field: &GridField) -> Self {
        let g = field.geometry();
        Self {
            topology: g.topology(),
            n: g.n(),
            shape: g.shape().to_vec(),
            spacing: g.spacing(),
            origin: g.origin().to_vec(),
            mask_rle: field.mask().map(MaskRle::encode),
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> IoError + '_ {
    move |source| IoError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Writes `bytes` to a temporary file next to `path`, then renames it over
/// `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io_err(dir))?;
    tmp.write_all(bytes).map_err(io_err(path))?;
    tmp.as_file().sync_all().map_err(io_err(path))?;
    tmp.persist(path).map_err(|e| IoError::Io {
        path: path.to_path_buf(),
        source: e.error,
    })?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value).map_err(|source| IoError::Json {
        path: path.to_path_buf(),
        source,
    })?;
    bytes.push(b'\n');
    write_atomic(path, &bytes)
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|source| IoError::Json {
        path: path.to_path_buf(),
        source,
    })
}

pub fn sidecar_path(csv_path: &Path) -> PathBuf {
    csv_path.with_extension("json")
}

/// Writes `field` to `csv_path` and its sidecar next to it.
pub fn write_field(csv_path: &Path, field: &GridField) -> Result<()> {
    let g = field.geometry();
    let csv_err = |source| IoError::Csv {
        path: csv_path.to_path_buf(),
        source,
    };
    let mut w = csv::Writer::from_writer(Vec::with_capacity(field.len() * 32));
    let mut header: Vec<String> = (0..g.axes()).map(|a| format!("index{a}")).collect();
    header.push("value".into());
    w.write_record(&header).map_err(csv_err)?;
    let mut record = Vec::with_capacity(g.axes() + 1);
    for (lin, v) in field.values().iter().enumerate() {
        record.clear();
        record.extend(g.unravel(lin).iter().map(|i| i.to_string()));
        record.push(format!("{v:?}"));
        w.write_record(&record).map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| IoError::Io {
        path: csv_path.to_path_buf(),
        source: e.into_error(),
    })?;
    write_atomic(csv_path, &bytes)?;
    write_json(&sidecar_path(csv_path), &FieldSidecar::of(field))
}

/// Reads a field written by [`write_field`].
pub fn read_field(csv_path: &Path) -> Result<GridField> {
    let meta: FieldSidecar = read_json(&sidecar_path(csv_path))?;
    let bad = |message: String| IoError::Format {
        path: csv_path.to_path_buf(),
        message,
    };
    let geometry = Arc::new(GridGeometry::new(
        meta.topology,
        meta.n,
        meta.shape.clone(),
        meta.spacing,
        meta.origin.clone(),
    )?);
    let axes = geometry.axes();
    let mut reader = csv::Reader::from_path(csv_path).map_err(|source| IoError::Csv {
        path: csv_path.to_path_buf(),
        source,
    })?;
    let header = reader
        .headers()
        .map_err(|source| IoError::Csv {
            path: csv_path.to_path_buf(),
            source,
        })?
        .clone();
    let expected: Vec<String> = (0..axes)
        .map(|a| format!("index{a}"))
        .chain(std::iter::once("value".to_string()))
        .collect();
    if header.iter().ne(expected.iter().map(String::as_str)) {
        return Err(bad(format!("header must be {}", expected.join(","))));
    }
    let mut values = Vec::with_capacity(geometry.len());
    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(|source| IoError::Csv {
            path: csv_path.to_path_buf(),
            source,
        })?;
        let idx: Vec<usize> = (0..axes)
            .map(|a| record[a].trim().parse::<usize>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| bad(format!("row {}: {e}", row + 2)))?;
        if row >= geometry.len() || geometry.unravel(row).as_slice() != idx.as_slice() {
            return Err(bad(format!("row {} is out of row-major order", row + 2)));
        }
        let v: f64 = record[axes]
            .trim()
            .parse()
            .map_err(|e| bad(format!("row {}: {e}", row + 2)))?;
        values.push(v);
    }
    if values.len() != geometry.len() {
        return Err(bad(format!(
            "expected {} rows, found {}",
            geometry.len(),
            values.len()
        )));
    }
    let mask = match meta.mask_rle {
        Some(rle) => Some(Arc::new(rle.decode())),
        None => None,
    };
    Ok(GridField::new(geometry, mask, values)?)
}
