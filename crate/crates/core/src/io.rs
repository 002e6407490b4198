//! Snapshot files and small serialization helpers.
//!
//! A snapshot set is a JSON header plus a raw little-endian payload stored
//! cell-major (row-major over the full grid) with time varying fastest.
//! Non-finite payload values mark missing data; a cell missing at any time step
//! is masked for the whole series.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use faer::Mat;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{GridSpec, SnapshotSeries};

pub const LAYOUT: &str = "cell-major row-major, time fastest";

/// File name used when a directory is given instead of a header path.
pub const HEADER_FILE: &str = "header.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dtype {
    F32,
    F64,
}

impl Dtype {
    fn width(self) -> usize {
        match self {
            Dtype::F32 => 4,
            Dtype::F64 => 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotHeader {
    pub rows: usize,
    pub cols: usize,
    pub cell_size_km: f64,
    pub origin_lat: f64,
    pub origin_lon: f64,
    pub dt_days: i64,
    pub start_date: NaiveDate,
    pub n_snapshots: usize,
    pub payload_file: String,
    pub dtype: Dtype,
    pub layout: String,
    /// Angular cell size; enables latitude/longitude output when present.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cell_size_deg: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub units: Option<String>,
}

/// Resolves a path that may be a directory holding `header.json`.
pub fn resolve_header(path: &Path) -> PathBuf {
    if path.is_dir() {
        path.join(HEADER_FILE)
    } else {
        path.to_path_buf()
    }
}

/// Loads a snapshot series from a JSON header (or a directory containing
/// `header.json`) or from a `.csv` file.
pub fn load_snapshots(path: impl AsRef<Path>) -> Result<SnapshotSeries> {
    let path = resolve_header(path.as_ref());
    if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv")) {
        return load_csv(&path);
    }
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let header: SnapshotHeader = serde_json::from_str(&text)?;
    if header.layout != LAYOUT {
        return Err(Error::Format(format!("unsupported layout {:?}", header.layout)));
    }
    if header.dt_days <= 0 {
        return Err(Error::Timestamps(format!("dt_days = {}", header.dt_days)));
    }
    let payload_path = path
        .parent()
        .unwrap_or_else(|| Path::new("."))
        .join(&header.payload_file);
    let bytes = fs::read(&payload_path).map_err(|e| Error::io(&payload_path, e))?;
    let cells = header.rows * header.cols;
    let expected = cells * header.n_snapshots * header.dtype.width();
    if bytes.len() != expected {
        return Err(Error::DimensionMismatch(format!(
            "payload has {} bytes, header implies {expected}",
            bytes.len()
        )));
    }
    let raw: Vec<f64> = match header.dtype {
        Dtype::F32 => bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect(),
        Dtype::F64 => bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect(),
    };
    let m = header.n_snapshots;
    let full = |cell: usize, t: usize| raw[cell * m + t];
    let grid_of = |mask| {
        GridSpec::new(
            header.rows,
            header.cols,
            header.cell_size_km,
            header.origin_lat,
            header.origin_lon,
            mask,
        )
        .map(|g| g.with_cell_size_deg(header.cell_size_deg))
    };
    assemble(cells, m, full, grid_of, header.start_date, header.dt_days as u32)
}

fn assemble(
    cells: usize,
    m: usize,
    value: impl Fn(usize, usize) -> f64,
    grid_of: impl FnOnce(Vec<bool>) -> Result<GridSpec>,
    start: NaiveDate,
    dt: u32,
) -> Result<SnapshotSeries> {
    if m == 0 {
        return Err(Error::TooFewSnapshots { need: 1, got: 0 });
    }
    let mask: Vec<bool> = (0..cells)
        .map(|cell| (0..m).all(|t| value(cell, t).is_finite()))
        .collect();
    let valid: Vec<usize> = (0..cells).filter(|&c| mask[c]).collect();
    let grid = grid_of(mask)?;
    let values = Mat::from_fn(valid.len(), m, |i, t| value(valid[i], t));
    SnapshotSeries::new(grid, values, start, dt)
}

/// Plain CSV: one row per snapshot, one `r{i}c{j}` column per cell, and an
/// optional leading `date` column. Empty or non-numeric cells count as missing.
fn load_csv(path: &Path) -> Result<SnapshotSeries> {
    let mut reader = csv::ReaderBuilder::new()
        .flexible(false)
        .from_path(path)
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            other => Error::Format(format!("{other:?}")),
        })?;
    let headers = reader.headers()?.clone();
    let has_date = headers.get(0).is_some_and(|h| h.eq_ignore_ascii_case("date"));
    let labels: Vec<(usize, usize)> = headers
        .iter()
        .skip(has_date as usize)
        .map(parse_label)
        .collect::<Result<_>>()?;
    let rows = labels.iter().map(|l| l.0).max().map_or(0, |r| r + 1);
    let cols = labels.iter().map(|l| l.1).max().map_or(0, |c| c + 1);
    if labels.len() != rows * cols {
        return Err(Error::DimensionMismatch(format!(
            "{} cell columns do not form a {rows}x{cols} grid",
            labels.len()
        )));
    }
    let mut snapshots: Vec<Vec<f64>> = Vec::new();
    let mut dates: Vec<NaiveDate> = Vec::new();
    for record in reader.records() {
        let record = record?;
        if has_date {
            let d = record.get(0).unwrap_or("");
            dates.push(
                d.parse()
                    .map_err(|_| Error::Format(format!("bad date {d:?}")))?,
            );
        }
        let mut snap = vec![f64::NAN; rows * cols];
        for (field, &(r, c)) in record.iter().skip(has_date as usize).zip(&labels) {
            snap[r * cols + c] = field.trim().parse().unwrap_or(f64::NAN);
        }
        snapshots.push(snap);
    }
    let m = snapshots.len();
    let (start, dt) = if has_date {
        check_dates(&dates)?
    } else {
        (NaiveDate::from_ymd_opt(2000, 1, 1).unwrap(), 1)
    };
    assemble(
        rows * cols,
        m,
        |cell, t| snapshots[t][cell],
        |mask| GridSpec::new(rows, cols, 1.0, 0.0, 0.0, mask),
        start,
        dt,
    )
}

fn parse_label(label: &str) -> Result<(usize, usize)> {
    let bad = || Error::Format(format!("column label {label:?} is not of the form r<i>c<j>"));
    let rest = label.trim().strip_prefix('r').ok_or_else(bad)?;
    let (r, c) = rest.split_once('c').ok_or_else(bad)?;
    Ok((r.parse().map_err(|_| bad())?, c.parse().map_err(|_| bad())?))
}

fn check_dates(dates: &[NaiveDate]) -> Result<(NaiveDate, u32)> {
    let first = *dates.first().ok_or(Error::TooFewSnapshots { need: 1, got: 0 })?;
    if dates.len() == 1 {
        return Ok((first, 1));
    }
    let step = (dates[1] - dates[0]).num_days();
    if step <= 0 {
        return Err(Error::Timestamps(format!("{} then {}", dates[0], dates[1])));
    }
    for w in dates.windows(2) {
        if (w[1] - w[0]).num_days() != step {
            return Err(Error::Timestamps(format!("{} then {}", w[0], w[1])));
        }
    }
    Ok((first, step as u32))
}

/// Writes `header.json` and `values.bin` into `dir`; masked cells are written as NaN.
pub fn write_snapshots(series: &SnapshotSeries, dir: impl AsRef<Path>, dtype: Dtype) -> Result<PathBuf> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let grid = series.grid();
    let m = series.n_snapshots();
    let cells = grid.rows() * grid.cols();
    let mut bytes = Vec::with_capacity(cells * m * dtype.width());
    for cell in 0..cells {
        let k = grid.valid_index(cell / grid.cols(), cell % grid.cols());
        for t in 0..m {
            let v = k.map_or(f64::NAN, |k| series.values()[(k, t)]);
            match dtype {
                Dtype::F32 => bytes.extend_from_slice(&(v as f32).to_le_bytes()),
                Dtype::F64 => bytes.extend_from_slice(&v.to_le_bytes()),
            }
        }
    }
    let (origin_lat, origin_lon) = grid.origin();
    let header = SnapshotHeader {
        rows: grid.rows(),
        cols: grid.cols(),
        cell_size_km: grid.cell_size_km(),
        origin_lat,
        origin_lon,
        dt_days: series.dt_days() as i64,
        start_date: series.start_date(),
        n_snapshots: m,
        payload_file: "values.bin".into(),
        dtype,
        layout: LAYOUT.into(),
        cell_size_deg: grid.cell_size_deg(),
        units: Some("ug/m3".into()),
    };
    write_atomic(dir.join("values.bin"), &bytes)?;
    let header_path = dir.join(HEADER_FILE);
    write_json(&header_path, &header)?;
    Ok(header_path)
}

/// Writes through a sibling temp file and renames it into place.
pub fn write_atomic(path: impl AsRef<Path>, bytes: &[u8]) -> Result<()> {
    let path = path.as_ref();
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    {
        let mut f = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
        f.write_all(bytes).map_err(|e| Error::io(&tmp, e))?;
        f.sync_all().map_err(|e| Error::io(&tmp, e))?;
    }
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn write_json<T: Serialize + ?Sized>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    let mut text = serde_json::to_vec_pretty(value)?;
    text.push(b'\n');
    write_atomic(path, &text)
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: impl AsRef<Path>) -> Result<T> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

/// Column-major little-endian f64 payload.
pub(crate) fn matrix_bytes(m: faer::MatRef<'_, f64>) -> Vec<u8> {
    let mut out = Vec::with_capacity(m.nrows() * m.ncols() * 8);
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            out.extend_from_slice(&m[(i, j)].to_le_bytes());
        }
    }
    out
}

pub(crate) fn read_f64s(path: &Path, expected: usize) -> Result<Vec<f64>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() != expected * 8 {
        return Err(Error::DimensionMismatch(format!(
            "{} holds {} bytes, expected {}",
            path.display(),
            bytes.len(),
            expected * 8
        )));
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect())
}
