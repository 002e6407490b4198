//! Sensor placement by QR column pivoting on the transposed mode library.
//!
//! Each column of `Ψᵀ` is one spatial location. Householder QR with greedy
//! column pivoting (Businger–Golub) selects, at every step, the location whose
//! row of `Ψ` has the largest norm orthogonal to the rows already picked.

use std::path::Path;

use faer::MatRef;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::GridSpec;
use crate::io::write_atomic;
use crate::library::ModeLibrary;

/// Residual norms within this relative gap are treated as tied.
pub const TIE_TOLERANCE: f64 = 1e-12;

/// Downdated norms below this fraction of their reference are recomputed.
pub const RECOMPUTE_GUARD: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct PivotedQr {
    /// Column indices in selection order.
    pub pivots: Vec<usize>,
    /// `|R_kk|`, the residual norm of each pivot when it was selected.
    pub r_diag: Vec<f64>,
}

/// Full pivoted QR: `min(p, q)` pivots of a `p × q` matrix.
pub fn pivoted_qr(a: MatRef<'_, f64>) -> PivotedQr {
    pivoted_qr_steps(a, a.nrows().min(a.ncols()))
}

/// The first `steps` pivots of a column-pivoted Householder QR.
pub fn pivoted_qr_steps(a: MatRef<'_, f64>, steps: usize) -> PivotedQr {
    let (p, q) = (a.nrows(), a.ncols());
    let steps = steps.min(p).min(q);
    let mut cols: Vec<Vec<f64>> = (0..q).map(|j| a.col(j).iter().copied().collect()).collect();
    let mut perm: Vec<usize> = (0..q).collect();
    let mut norms: Vec<f64> = cols.iter().map(|c| l2(c)).collect();
    let mut reference = norms.clone();
    let mut pivots = Vec::with_capacity(steps);
    let mut r_diag = Vec::with_capacity(steps);

    for k in 0..steps {
        let mut best = k;
        for j in k + 1..q {
            let (nj, nb) = (norms[j], norms[best]);
            if nj > nb * (1.0 + TIE_TOLERANCE) || (nj >= nb * (1.0 - TIE_TOLERANCE) && perm[j] < perm[best]) {
                best = j;
            }
        }
        cols.swap(k, best);
        perm.swap(k, best);
        norms.swap(k, best);
        reference.swap(k, best);

        let alpha = l2(&cols[k][k..]);
        pivots.push(perm[k]);
        r_diag.push(alpha);
        if alpha == 0.0 {
            continue;
        }
        // v = x + sign(x0) ‖x‖ e0 and H = I − 2 v vᵀ / (vᵀv)
        let mut v: Vec<f64> = cols[k][k..].to_vec();
        let sign = if v[0] >= 0.0 { 1.0 } else { -1.0 };
        v[0] += sign * alpha;
        let vv: f64 = v.iter().map(|x| x * x).sum();
        cols[k][k] = -sign * alpha;
        cols[k][k + 1..].iter_mut().for_each(|x| *x = 0.0);
        let (_, rest) = cols.split_at_mut(k + 1);
        for (off, col) in rest.iter_mut().enumerate() {
            let j = k + 1 + off;
            let tail = &mut col[k..];
            let dot: f64 = tail.iter().zip(&v).map(|(a, b)| a * b).sum();
            let s = 2.0 * dot / vv;
            tail.iter_mut().zip(&v).for_each(|(a, b)| *a -= s * b);

            let rkj = col[k];
            let down = norms[j] * norms[j] - rkj * rkj;
            if down <= 0.0 || down.sqrt() < RECOMPUTE_GUARD * reference[j] {
                norms[j] = l2(&col[k + 1..]);
                reference[j] = norms[j];
            } else {
                norms[j] = down.sqrt();
            }
        }
    }
    PivotedQr { pivots, r_diag }
}

fn l2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensorCoord {
    pub row: usize,
    pub col: usize,
    pub lat: Option<f64>,
    pub lon: Option<f64>,
}

/// Selected sensor sites in pivot order.
#[derive(Debug, Clone, PartialEq)]
pub struct SensorSet {
    /// Valid-cell indices.
    pub pivots: Vec<usize>,
    pub coords: Vec<SensorCoord>,
    pub scores: Vec<f64>,
}

impl SensorSet {
    /// Sensors at the given valid cells, with scores supplied by the caller.
    pub fn from_cells(grid: &GridSpec, cells: Vec<usize>, scores: Vec<f64>) -> Result<Self> {
        if cells.len() != scores.len() {
            return Err(Error::DimensionMismatch("one score per sensor required".into()));
        }
        let coords = cells
            .iter()
            .map(|&k| {
                if k >= grid.n_valid() {
                    return Err(Error::InvalidArgument(format!("cell {k} is not a valid cell")));
                }
                let (row, col) = grid.cell_position(k);
                let ll = grid.lat_lon(row, col);
                Ok(SensorCoord {
                    row,
                    col,
                    lat: ll.map(|x| x.0),
                    lon: ll.map(|x| x.1),
                })
            })
            .collect::<Result<_>>()?;
        Ok(SensorSet {
            pivots: cells,
            coords,
            scores,
        })
    }

    pub fn len(&self) -> usize {
        self.pivots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pivots.is_empty()
    }

    /// CSV with columns `rank, cell_index, row, col, lat, lon, score`.
    pub fn to_csv(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["rank", "cell_index", "row", "col", "lat", "lon", "score"])?;
        for (i, (&cell, c)) in self.pivots.iter().zip(&self.coords).enumerate() {
            let opt = |v: Option<f64>| v.map(|x| format!("{x}")).unwrap_or_default();
            w.write_record([
                i.to_string(),
                cell.to_string(),
                c.row.to_string(),
                c.col.to_string(),
                opt(c.lat),
                opt(c.lon),
                format!("{}", self.scores[i]),
            ])?;
        }
        w.into_inner()
            .map_err(|e| Error::Format(format!("csv flush: {e}")))
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        write_atomic(path, &self.to_csv()?)
    }

    /// Reads a sensor CSV, re-deriving coordinates from `grid`.
    pub fn read_csv(path: impl AsRef<Path>, grid: &GridSpec) -> Result<SensorSet> {
        let path = path.as_ref();
        let mut r = csv::Reader::from_path(path).map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            other => Error::Format(format!("{other:?}")),
        })?;
        let mut cells = Vec::new();
        let mut scores = Vec::new();
        for rec in r.records() {
            let rec = rec?;
            let field = |i: usize| rec.get(i).unwrap_or("").trim().to_string();
            cells.push(
                field(1)
                    .parse()
                    .map_err(|_| Error::Format(format!("bad cell index {:?}", field(1))))?,
            );
            scores.push(field(6).parse().unwrap_or(f64::NAN));
        }
        SensorSet::from_cells(grid, cells, scores)
    }
}

/// Places `count` sensors at the leading QR pivots of `Ψᵀ`.
pub fn place_sensors(library: &ModeLibrary, grid: &GridSpec, count: usize) -> Result<SensorSet> {
    let max = library.n().min(library.n_columns());
    if count == 0 || count > max {
        return Err(Error::TooManySensors {
            requested: count,
            max,
        });
    }
    if library.n() != grid.n_valid() {
        return Err(Error::DimensionMismatch(format!(
            "library has {} rows, grid has {} valid cells",
            library.n(),
            grid.n_valid()
        )));
    }
    let qr = pivoted_qr_steps(library.basis().transpose(), count);
    SensorSet::from_cells(grid, qr.pivots, qr.r_diag)
}

/// Pivots each library on its own and returns the union, in library order,
/// without duplicates. Each library contributes up to its column count.
pub fn place_sensors_separate(libraries: &[ModeLibrary], grid: &GridSpec) -> Result<SensorSet> {
    let mut cells = Vec::new();
    let mut scores = Vec::new();
    for lib in libraries {
        let s = place_sensors(lib, grid, lib.n().min(lib.n_columns()))?;
        for (c, sc) in s.pivots.into_iter().zip(s.scores) {
            if !cells.contains(&c) {
                cells.push(c);
                scores.push(sc);
            }
        }
    }
    if cells.is_empty() {
        return Err(Error::EmptyLibrary);
    }
    SensorSet::from_cells(grid, cells, scores)
}

/// Fraction of sensors strictly west of `meridian_lon` (degrees east).
pub fn region_fraction(sensors: &SensorSet, meridian_lon: f64) -> Result<f64> {
    if sensors.is_empty() {
        return Err(Error::InvalidArgument("empty sensor set".into()));
    }
    let mut west = 0usize;
    for c in &sensors.coords {
        let lon = c.lon.ok_or_else(|| {
            Error::Unavailable("region fraction", "grid header carries no cell_size_deg".into())
        })?;
        if lon < meridian_lon {
            west += 1;
        }
    }
    Ok(west as f64 / sensors.len() as f64)
}

/// Overlap between placed sensors and an external monitor network.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MonitorComparison {
    pub n_monitors: usize,
    /// Monitors falling inside the grid on a valid cell.
    pub n_monitors_on_grid: usize,
    /// Distinct valid cells holding at least one monitor.
    pub n_monitor_cells: usize,
    pub n_sensors: usize,
    /// Sensors sharing a cell with some monitor.
    pub n_shared_cells: usize,
    /// Mean distance from each sensor to the nearest monitor cell, in km.
    pub mean_sensor_to_monitor_km: Option<f64>,
    pub sensor_fraction_west: Option<f64>,
    pub monitor_fraction_west: Option<f64>,
}

pub fn compare_with_monitors(
    sensors: &SensorSet,
    grid: &GridSpec,
    monitors: &[(f64, f64)],
    meridian_lon: f64,
) -> Result<MonitorComparison> {
    if grid.cell_size_deg().is_none() {
        return Err(Error::Unavailable(
            "monitor comparison",
            "grid header carries no cell_size_deg".into(),
        ));
    }
    let mut monitor_cells: Vec<(usize, usize)> = monitors
        .iter()
        .filter_map(|&(lat, lon)| grid.locate(lat, lon))
        .filter(|&(r, c)| grid.valid_index(r, c).is_some())
        .collect();
    let on_grid = monitor_cells.len();
    monitor_cells.sort_unstable();
    monitor_cells.dedup();
    let shared = sensors
        .coords
        .iter()
        .filter(|c| monitor_cells.binary_search(&(c.row, c.col)).is_ok())
        .count();
    let mean_dist = (!monitor_cells.is_empty() && !sensors.is_empty()).then(|| {
        let total: f64 = sensors
            .coords
            .iter()
            .map(|s| {
                monitor_cells
                    .iter()
                    .map(|&(r, c)| ((s.row as f64 - r as f64).powi(2) + (s.col as f64 - c as f64).powi(2)).sqrt())
                    .fold(f64::INFINITY, f64::min)
            })
            .sum();
        total / sensors.len() as f64 * grid.cell_size_km()
    });
    let monitor_west = (!monitors.is_empty())
        .then(|| monitors.iter().filter(|m| m.1 < meridian_lon).count() as f64 / monitors.len() as f64);
    Ok(MonitorComparison {
        n_monitors: monitors.len(),
        n_monitors_on_grid: on_grid,
        n_monitor_cells: monitor_cells.len(),
        n_sensors: sensors.len(),
        n_shared_cells: shared,
        mean_sensor_to_monitor_km: mean_dist,
        sensor_fraction_west: region_fraction(sensors, meridian_lon).ok(),
        monitor_fraction_west: monitor_west,
    })
}

/// Reads `lat, lon` pairs from a CSV with a header row naming those columns.
pub fn read_monitors(path: impl AsRef<Path>) -> Result<Vec<(f64, f64)>> {
    let path = path.as_ref();
    let mut r = csv::Reader::from_path(path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Format(format!("{other:?}")),
    })?;
    let headers = r.headers()?.clone();
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim().eq_ignore_ascii_case(name))
            .ok_or_else(|| Error::Format(format!("monitor CSV lacks a {name} column")))
    };
    let (ilat, ilon) = (find("lat")?, find("lon")?);
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let get = |i: usize| {
            rec.get(i)
                .unwrap_or("")
                .trim()
                .parse::<f64>()
                .map_err(|_| Error::Format(format!("bad coordinate in {rec:?}")))
        };
        out.push((get(ilat)?, get(ilon)?));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use faer::Mat;

    #[test]
    fn identity_pivots_in_index_order() {
        let a = Mat::<f64>::identity(3, 3);
        let qr = pivoted_qr(a.as_ref());
        assert_eq!(qr.pivots, vec![0, 1, 2]);
        for s in qr.r_diag {
            assert!((s - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn dominant_column_first() {
        let a = Mat::from_fn(2, 2, |i, j| [[3.0, 1.0], [0.0, 1.0]][i][j]);
        let qr = pivoted_qr(a.as_ref());
        assert_eq!(qr.pivots[0], 0);
        assert!((qr.r_diag[0] - 3.0).abs() < 1e-15);
        assert!((qr.r_diag[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_columns_break_ties_low() {
        let a = Mat::<f64>::zeros(2, 3);
        let qr = pivoted_qr(a.as_ref());
        assert_eq!(qr.pivots, vec![0, 1]);
        assert_eq!(qr.r_diag, vec![0.0, 0.0]);
    }

    fn grid(n: usize) -> GridSpec {
        GridSpec::full(1, n, 10.0)
            .unwrap()
            .with_origin(40.0, -125.0)
            .with_cell_size_deg(Some(5.0))
    }

    #[test]
    fn single_mode_peak() {
        let mut col = vec![0.1; 10];
        col[7] = -0.9;
        let lib = ModeLibrary::from_basis(Mat::from_fn(10, 1, |i, _| col[i])).unwrap();
        let s = place_sensors(&lib, &grid(10), 1).unwrap();
        assert_eq!(s.pivots, vec![7]);
        assert!(matches!(
            place_sensors(&lib, &grid(10), 2),
            Err(Error::TooManySensors { requested: 2, max: 1 })
        ));
    }

    #[test]
    fn disjoint_single_cell_modes() {
        let cells = [5usize, 2, 8];
        let lib = ModeLibrary::from_basis(Mat::from_fn(10, 3, |i, j| (i == cells[j]) as u8 as f64)).unwrap();
        let s = place_sensors(&lib, &grid(10), 3).unwrap();
        assert_eq!(s.pivots, vec![2, 5, 8]);
    }

    #[test]
    fn region_fraction_cases() {
        let g = grid(10);
        // lon of col c = -125 + (c + 0.5) * 5
        let west_east = SensorSet::from_cells(&g, vec![2, 6], vec![1.0, 1.0]).unwrap();
        assert_eq!(west_east.coords[0].lon, Some(-112.5));
        assert_eq!(west_east.coords[1].lon, Some(-92.5));
        assert_eq!(region_fraction(&west_east, -100.0).unwrap(), 0.5);
        let all_west = SensorSet::from_cells(&g, vec![0, 1], vec![1.0, 1.0]).unwrap();
        assert_eq!(region_fraction(&all_west, -100.0).unwrap(), 1.0);
        let empty = SensorSet::from_cells(&g, vec![], vec![]).unwrap();
        assert!(region_fraction(&empty, -100.0).is_err());
        let no_deg = SensorSet::from_cells(&GridSpec::full(1, 3, 1.0).unwrap(), vec![0], vec![1.0]).unwrap();
        assert!(matches!(region_fraction(&no_deg, -100.0), Err(Error::Unavailable(..))));
    }

    #[test]
    fn csv_roundtrip_and_compare() {
        let g = grid(10);
        let s = SensorSet::from_cells(&g, vec![3, 0, 9], vec![2.0, 1.5, 0.25]).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.csv");
        s.write_csv(&p).unwrap();
        let back = SensorSet::read_csv(&p, &g).unwrap();
        assert_eq!(back, s);

        let monitors = vec![(37.5, -107.5), (37.5, -122.5), (10.0, 0.0)];
        let cmp = compare_with_monitors(&s, &g, &monitors, -100.0).unwrap();
        assert_eq!(cmp.n_monitors_on_grid, 2);
        assert_eq!(cmp.n_monitor_cells, 2);
        assert_eq!(cmp.n_shared_cells, 2); // cells 3 and 0
        // sensor at col 9 is 6 cells from col 3
        assert!((cmp.mean_sensor_to_monitor_km.unwrap() - 6.0 * 10.0 / 3.0).abs() < 1e-12);
    }
}
