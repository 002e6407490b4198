//! Grid geometry, masked snapshot series, coarsening and windowing.
//!
//! Every spatial vector in this crate is indexed by *valid-cell index*: the
//! position of a cell among the unmasked cells of its grid, enumerated in
//! row-major order. [`GridSpec`] owns the mapping between valid-cell indices,
//! `(row, col)` pairs and geographic coordinates.

use chrono::{Duration, NaiveDate};
use faer::Mat;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Rectangular grid with a time-invariant validity mask.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GridRepr", into = "GridRepr")]
pub struct GridSpec {
    rows: usize,
    cols: usize,
    cell_size_km: f64,
    origin_lat: f64,
    origin_lon: f64,
    cell_size_deg: Option<f64>,
    mask: Vec<bool>,
    // derived
    valid: Vec<usize>,
    lookup: Vec<Option<usize>>,
}

#[derive(Serialize, Deserialize)]
struct GridRepr {
    rows: usize,
    cols: usize,
    cell_size_km: f64,
    origin_lat: f64,
    origin_lon: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    cell_size_deg: Option<f64>,
    mask: Vec<bool>,
}

impl TryFrom<GridRepr> for GridSpec {
    type Error = Error;

    fn try_from(r: GridRepr) -> Result<Self> {
        GridSpec::new(r.rows, r.cols, r.cell_size_km, r.origin_lat, r.origin_lon, r.mask)
            .map(|g| g.with_cell_size_deg(r.cell_size_deg))
    }
}

impl From<GridSpec> for GridRepr {
    fn from(g: GridSpec) -> Self {
        GridRepr {
            rows: g.rows,
            cols: g.cols,
            cell_size_km: g.cell_size_km,
            origin_lat: g.origin_lat,
            origin_lon: g.origin_lon,
            cell_size_deg: g.cell_size_deg,
            mask: g.mask,
        }
    }
}

impl GridSpec {
    /// Builds a grid; `mask[r * cols + c]` is `true` for valid cells.
    pub fn new(
        rows: usize,
        cols: usize,
        cell_size_km: f64,
        origin_lat: f64,
        origin_lon: f64,
        mask: Vec<bool>,
    ) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidArgument(format!(
                "grid must have at least one row and column, got {rows}x{cols}"
            )));
        }
        if !(cell_size_km > 0.0 && cell_size_km.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "cell size must be positive, got {cell_size_km}"
            )));
        }
        if mask.len() != rows * cols {
            return Err(Error::DimensionMismatch(format!(
                "mask has {} entries for a {rows}x{cols} grid",
                mask.len()
            )));
        }
        let valid: Vec<usize> = (0..mask.len()).filter(|&i| mask[i]).collect();
        if valid.is_empty() {
            return Err(Error::InvalidArgument("grid has no valid cells".into()));
        }
        let mut lookup = vec![None; mask.len()];
        for (k, &cell) in valid.iter().enumerate() {
            lookup[cell] = Some(k);
        }
        Ok(GridSpec {
            rows,
            cols,
            cell_size_km,
            origin_lat,
            origin_lon,
            cell_size_deg: None,
            mask,
            valid,
            lookup,
        })
    }

    /// A grid with every cell valid.
    pub fn full(rows: usize, cols: usize, cell_size_km: f64) -> Result<Self> {
        Self::new(rows, cols, cell_size_km, 0.0, 0.0, vec![true; rows * cols])
    }

    /// Sets the angular cell size used for latitude/longitude lookups.
    pub fn with_cell_size_deg(mut self, deg: Option<f64>) -> Self {
        self.cell_size_deg = deg;
        self
    }

    pub fn with_origin(mut self, lat: f64, lon: f64) -> Self {
        self.origin_lat = lat;
        self.origin_lon = lon;
        self
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn cell_size_km(&self) -> f64 {
        self.cell_size_km
    }

    pub fn cell_size_deg(&self) -> Option<f64> {
        self.cell_size_deg
    }

    pub fn origin(&self) -> (f64, f64) {
        (self.origin_lat, self.origin_lon)
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    /// Number of valid cells `n`.
    pub fn n_valid(&self) -> usize {
        self.valid.len()
    }

    /// `(row, col)` of a valid-cell index.
    pub fn cell_position(&self, valid_index: usize) -> (usize, usize) {
        let cell = self.valid[valid_index];
        (cell / self.cols, cell % self.cols)
    }

    /// Valid-cell index of `(row, col)`, or `None` when masked or out of range.
    pub fn valid_index(&self, row: usize, col: usize) -> Option<usize> {
        if row >= self.rows || col >= self.cols {
            return None;
        }
        self.lookup[row * self.cols + col]
    }

    /// Cell-centre latitude and longitude. Longitude grows eastward from the
    /// north-west origin, latitude decreases southward.
    pub fn lat_lon(&self, row: usize, col: usize) -> Option<(f64, f64)> {
        let deg = self.cell_size_deg?;
        Some((
            self.origin_lat - (row as f64 + 0.5) * deg,
            self.origin_lon + (col as f64 + 0.5) * deg,
        ))
    }

    /// Cell containing a geographic point, if the point falls inside the grid.
    pub fn locate(&self, lat: f64, lon: f64) -> Option<(usize, usize)> {
        let deg = self.cell_size_deg?;
        let r = (self.origin_lat - lat) / deg;
        let c = (lon - self.origin_lon) / deg;
        if r < 0.0 || c < 0.0 || r >= self.rows as f64 || c >= self.cols as f64 {
            return None;
        }
        Some((r as usize, c as usize))
    }

    /// Gathers the valid cells of a full field into a length-`n` vector.
    pub fn flatten(&self, field: &Field) -> Result<Vec<f64>> {
        if field.rows != self.rows || field.cols != self.cols {
            return Err(Error::DimensionMismatch(format!(
                "field is {}x{}, grid is {}x{}",
                field.rows, field.cols, self.rows, self.cols
            )));
        }
        self.valid
            .iter()
            .map(|&cell| {
                field.data[cell].ok_or_else(|| {
                    Error::InvalidArgument(format!("field has no value at valid cell {cell}"))
                })
            })
            .collect()
    }

    /// Scatters a length-`n` vector back onto the full grid.
    pub fn unflatten(&self, values: &[f64]) -> Result<Field> {
        if values.len() != self.n_valid() {
            return Err(Error::DimensionMismatch(format!(
                "vector has {} entries, grid has {} valid cells",
                values.len(),
                self.n_valid()
            )));
        }
        let mut data = vec![None; self.rows * self.cols];
        for (&cell, &v) in self.valid.iter().zip(values) {
            data[cell] = Some(v);
        }
        Ok(Field {
            rows: self.rows,
            cols: self.cols,
            data,
        })
    }
}

/// A full 2-D field; masked cells hold `None`.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<Option<f64>>,
}

impl Field {
    pub fn get(&self, row: usize, col: usize) -> Option<f64> {
        self.data[row * self.cols + col]
    }
}

/// Valid-cell values over a run of uniformly spaced days.
#[derive(Debug, Clone)]
pub struct SnapshotSeries {
    grid: GridSpec,
    values: Mat<f64>,
    start_date: NaiveDate,
    dt_days: u32,
}

impl SnapshotSeries {
    /// `values` is `n_valid × m`; every entry must be finite.
    pub fn new(grid: GridSpec, values: Mat<f64>, start_date: NaiveDate, dt_days: u32) -> Result<Self> {
        if values.nrows() != grid.n_valid() {
            return Err(Error::DimensionMismatch(format!(
                "value matrix has {} rows, grid has {} valid cells",
                values.nrows(),
                grid.n_valid()
            )));
        }
        if values.ncols() == 0 {
            return Err(Error::TooFewSnapshots { need: 1, got: 0 });
        }
        if dt_days == 0 {
            return Err(Error::Timestamps("time step must be at least one day".into()));
        }
        for j in 0..values.ncols() {
            for i in 0..values.nrows() {
                if !values[(i, j)].is_finite() {
                    return Err(Error::InvalidArgument(format!(
                        "non-finite value at valid cell {i}, snapshot {j}"
                    )));
                }
            }
        }
        Ok(SnapshotSeries {
            grid,
            values,
            start_date,
            dt_days,
        })
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    /// `n × m` value matrix.
    pub fn values(&self) -> &Mat<f64> {
        &self.values
    }

    pub fn n_cells(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_snapshots(&self) -> usize {
        self.values.ncols()
    }

    pub fn start_date(&self) -> NaiveDate {
        self.start_date
    }

    pub fn dt_days(&self) -> u32 {
        self.dt_days
    }

    pub fn date_at(&self, snapshot: usize) -> NaiveDate {
        self.start_date + Duration::days(snapshot as i64 * self.dt_days as i64)
    }

    pub fn timestamps(&self) -> Vec<NaiveDate> {
        (0..self.n_snapshots()).map(|t| self.date_at(t)).collect()
    }

    pub fn snapshot(&self, t: usize) -> Vec<f64> {
        self.values.col(t).iter().copied().collect()
    }

    /// Mean over every valid cell and snapshot.
    pub fn mean(&self) -> f64 {
        let total: f64 = (0..self.n_snapshots())
            .map(|j| self.values.col(j).iter().sum::<f64>())
            .sum();
        total / (self.n_cells() * self.n_snapshots()) as f64
    }

    /// Columns `[start, start + len)` as a new series with shifted dates.
    pub fn window(&self, start: usize, len: usize) -> Result<SnapshotSeries> {
        if len == 0 || start + len > self.n_snapshots() {
            return Err(Error::InvalidArgument(format!(
                "window [{start}, {}) outside series of {} snapshots",
                start + len,
                self.n_snapshots()
            )));
        }
        Ok(SnapshotSeries {
            grid: self.grid.clone(),
            values: self.values.subcols(start, len).to_owned(),
            start_date: self.date_at(start),
            dt_days: self.dt_days,
        })
    }
}

/// Block-averages the grid by `factor` in each direction.
///
/// Each output cell is the mean of the valid fine cells in its block; blocks
/// with no valid fine cell are masked. Ragged edge blocks average whatever
/// cells they contain.
pub fn coarsen(series: &SnapshotSeries, factor: usize) -> Result<SnapshotSeries> {
    if factor < 1 {
        return Err(Error::InvalidArgument("coarsening factor must be at least 1".into()));
    }
    let fine = series.grid();
    if factor == 1 {
        return Ok(series.clone());
    }
    let rows = fine.rows().div_ceil(factor);
    let cols = fine.cols().div_ceil(factor);

    let mut blocks: Vec<Vec<usize>> = vec![Vec::new(); rows * cols];
    for k in 0..fine.n_valid() {
        let (r, c) = fine.cell_position(k);
        blocks[(r / factor) * cols + c / factor].push(k);
    }
    let mask: Vec<bool> = blocks.iter().map(|b| !b.is_empty()).collect();
    let (lat, lon) = fine.origin();
    let grid = GridSpec::new(rows, cols, fine.cell_size_km() * factor as f64, lat, lon, mask)?
        .with_cell_size_deg(fine.cell_size_deg().map(|d| d * factor as f64));

    let members: Vec<&Vec<usize>> = blocks.iter().filter(|b| !b.is_empty()).collect();
    let x = series.values();
    let values = Mat::from_fn(members.len(), series.n_snapshots(), |i, t| {
        let block = members[i];
        block.iter().map(|&k| x[(k, t)]).sum::<f64>() / block.len() as f64
    });
    SnapshotSeries::new(grid, values, series.start_date(), series.dt_days())
}

/// First and last `window_len` snapshots; the two overlap when the series is
/// shorter than `2 * window_len`.
pub fn split_windows(
    series: &SnapshotSeries,
    window_len: usize,
) -> Result<(SnapshotSeries, SnapshotSeries)> {
    let m = series.n_snapshots();
    if window_len == 0 || m < window_len {
        return Err(Error::TooFewSnapshots {
            need: window_len.max(1),
            got: m,
        });
    }
    Ok((series.window(0, window_len)?, series.window(m - window_len, window_len)?))
}
