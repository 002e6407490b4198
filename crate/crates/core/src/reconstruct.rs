//! Full-field reconstruction from sensor readings, and reconstruction scoring.
//!
//! With sensors at rows `S` of the library `Ψ`, the coefficients solve
//! `Ψ_S a = y` in the least-squares sense by a truncated SVD, and the field is
//! `Ψ a`.

use faer::{Mat, MatRef};
use itertools::Itertools;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Serialize, Serializer};

use crate::error::{Error, Result};
use crate::grid::SnapshotSeries;
use crate::library::ModeLibrary;
use crate::linalg::{lstsq_truncated, numerical_rank, thin_svd};
use crate::sensors::SensorSet;

/// Singular values of the sensor submatrix below this fraction of the
/// largest are truncated in the solve.
pub const SOLVE_CUTOFF: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct Reconstruction {
    /// `n × T` reconstructed fields.
    pub fields: Mat<f64>,
    /// `σ_max / σ_min` of the sensor submatrix; infinite when rank-deficient.
    pub condition_number: f64,
    pub rank: usize,
}

/// Readings of `values` at the sensor cells: `p × T`.
pub fn sensor_readings(values: MatRef<'_, f64>, cells: &[usize]) -> Mat<f64> {
    Mat::from_fn(cells.len(), values.ncols(), |i, t| values[(cells[i], t)])
}

/// Reconstructs full fields from readings `y` (`p × T`) at `sensors`.
pub fn reconstruct_field(library: &ModeLibrary, sensors: &SensorSet, y: MatRef<'_, f64>) -> Result<Reconstruction> {
    reconstruct_from_cells(library.basis().as_ref(), &sensors.pivots, y)
}

pub fn reconstruct_from_cells(basis: MatRef<'_, f64>, cells: &[usize], y: MatRef<'_, f64>) -> Result<Reconstruction> {
    let (p, r) = (cells.len(), basis.ncols());
    if p < r {
        return Err(Error::Underdetermined { sensors: p, columns: r });
    }
    if y.nrows() != p {
        return Err(Error::DimensionMismatch(format!("{} readings per snapshot for {p} sensors", y.nrows())));
    }
    if let Some(&bad) = cells.iter().find(|&&c| c >= basis.nrows()) {
        return Err(Error::InvalidArgument(format!("sensor cell {bad} outside the library")));
    }
    let sub = sensor_readings(basis, cells);
    let (coeff, s) = lstsq_truncated(sub.as_ref(), y, SOLVE_CUTOFF)?;
    let rank = numerical_rank(&s, SOLVE_CUTOFF);
    let cond = condition_from(&s, r);
    Ok(Reconstruction {
        fields: basis * &coeff,
        condition_number: cond,
        rank,
    })
}

fn condition_from(s: &[f64], columns: usize) -> f64 {
    let rank = numerical_rank(s, SOLVE_CUTOFF);
    if rank < columns || s.is_empty() {
        f64::INFINITY
    } else {
        s[0] / s[rank - 1]
    }
}

/// `σ_max / σ_min` of the rows `cells` of `basis`, infinite when rank-deficient.
pub fn submatrix_condition(basis: MatRef<'_, f64>, cells: &[usize]) -> Result<f64> {
    if cells.len() < basis.ncols() {
        return Ok(f64::INFINITY);
    }
    let sub = sensor_readings(basis, cells);
    Ok(condition_from(&thin_svd(sub.as_ref())?.s, basis.ncols()))
}

fn serialize_condition<S: Serializer>(v: &Option<f64>, s: S) -> std::result::Result<S::Ok, S::Error> {
    match v {
        Some(x) if x.is_infinite() => s.serialize_str("inf"),
        Some(x) => s.serialize_f64(*x),
        None => s.serialize_none(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReconstructionReport {
    /// `‖X̂ − X‖_F / ‖X‖_F` over valid cells and evaluated snapshots.
    pub relative_frobenius: f64,
    pub per_snapshot_rmse: Vec<f64>,
    /// RMSE over time for each valid cell.
    pub per_cell_rmse: Vec<f64>,
    #[serde(serialize_with = "serialize_condition")]
    pub condition_number: Option<f64>,
}

impl ReconstructionReport {
    pub fn with_condition(mut self, cond: f64) -> Self {
        self.condition_number = Some(cond);
        self
    }
}

pub fn evaluate(truth: &SnapshotSeries, reconstructed: MatRef<'_, f64>) -> Result<ReconstructionReport> {
    evaluate_matrix(truth.values().as_ref(), reconstructed)
}

pub fn evaluate_matrix(truth: MatRef<'_, f64>, reconstructed: MatRef<'_, f64>) -> Result<ReconstructionReport> {
    let (n, m) = (truth.nrows(), truth.ncols());
    if reconstructed.nrows() != n || reconstructed.ncols() != m {
        return Err(Error::DimensionMismatch(format!(
            "truth is {n}x{m}, reconstruction is {}x{}",
            reconstructed.nrows(),
            reconstructed.ncols()
        )));
    }
    let mut cell_sq = vec![0.0; n];
    let mut snap_sq = vec![0.0; m];
    let mut truth_sq = 0.0;
    for t in 0..m {
        for i in 0..n {
            let e = reconstructed[(i, t)] - truth[(i, t)];
            cell_sq[i] += e * e;
            snap_sq[t] += e * e;
            truth_sq += truth[(i, t)] * truth[(i, t)];
        }
    }
    let err: f64 = snap_sq.iter().sum::<f64>().sqrt();
    let relative = if truth_sq > 0.0 {
        err / truth_sq.sqrt()
    } else if err == 0.0 {
        0.0
    } else {
        f64::INFINITY
    };
    Ok(ReconstructionReport {
        relative_frobenius: relative,
        per_snapshot_rmse: snap_sq.iter().map(|s| (s / n as f64).sqrt()).collect(),
        per_cell_rmse: cell_sq.iter().map(|s| (s / m.max(1) as f64).sqrt()).collect(),
        condition_number: None,
    })
}

/// Relative Frobenius error of reconstructing `test` (`n × T`) from `cells`.
pub fn subset_error(basis: MatRef<'_, f64>, cells: &[usize], test: MatRef<'_, f64>) -> Result<f64> {
    let y = sensor_readings(test, cells);
    let rec = reconstruct_from_cells(basis, cells, y.as_ref())?;
    Ok(evaluate_matrix(test, rec.fields.as_ref())?.relative_frobenius)
}

/// Worst-case amplification `‖Ψ Ψ_S⁺‖₂` of sensor-level perturbations into
/// the reconstructed field.
pub fn amplification(basis: MatRef<'_, f64>, cells: &[usize]) -> Result<f64> {
    let sub = sensor_readings(basis, cells);
    let svd = thin_svd(sub.as_ref())?;
    let rank = numerical_rank(&svd.s, SOLVE_CUTOFF);
    if rank < basis.ncols() {
        return Ok(f64::INFINITY);
    }
    // Ψ_S⁺ = V Σ⁻¹ Uᵀ ; Ψ Ψ_S⁺ has the same 2-norm as Ψ V Σ⁻¹.
    let mut m = basis * &svd.v;
    for j in 0..m.ncols() {
        let inv = 1.0 / svd.s[j];
        for i in 0..m.nrows() {
            m[(i, j)] *= inv;
        }
    }
    Ok(thin_svd(m.as_ref())?.s.first().copied().unwrap_or(0.0))
}

pub const ORACLE_MAX_CELLS: usize = 16;
pub const ORACLE_MAX_SENSORS: usize = 4;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleResult {
    /// Subset with the smallest worst-case amplification, and that value.
    pub best_amplification: (Vec<usize>, f64),
    /// Subset with the smallest error on the supplied test fields.
    pub best_test_error: Option<(Vec<usize>, f64)>,
    pub subsets_evaluated: usize,
}

/// Enumerates every `p`-subset of the `n` cells of a small basis.
pub fn exhaustive_oracle(basis: MatRef<'_, f64>, p: usize, test: Option<MatRef<'_, f64>>) -> Result<OracleResult> {
    let (n, r) = (basis.nrows(), basis.ncols());
    if p == 0 {
        return Err(Error::InvalidArgument("sensor count must be at least 1".into()));
    }
    if n > ORACLE_MAX_CELLS || p > ORACLE_MAX_SENSORS {
        return Err(Error::EnumerationBound(format!(
            "n = {n}, p = {p}; limits are n <= {ORACLE_MAX_CELLS}, p <= {ORACLE_MAX_SENSORS}"
        )));
    }
    if p > n {
        return Err(Error::TooManySensors { requested: p, max: n });
    }
    if p < r {
        return Err(Error::Underdetermined { sensors: p, columns: r });
    }
    if let Some(t) = test {
        if t.nrows() != n {
            return Err(Error::DimensionMismatch("test fields must have one row per cell".into()));
        }
    }
    let mut best_amp: Option<(Vec<usize>, f64)> = None;
    let mut best_err: Option<(Vec<usize>, f64)> = None;
    let mut count = 0;
    for subset in (0..n).combinations(p) {
        count += 1;
        let amp = amplification(basis, &subset)?;
        if best_amp.as_ref().is_none_or(|b| amp < b.1) {
            best_amp = Some((subset.clone(), amp));
        }
        if let Some(t) = test {
            let err = subset_error(basis, &subset, t)?;
            if best_err.as_ref().is_none_or(|b| err < b.1) {
                best_err = Some((subset, err));
            }
        }
    }
    Ok(OracleResult {
        best_amplification: best_amp.expect("at least one subset"),
        best_test_error: best_err,
        subsets_evaluated: count,
    })
}

/// Pivot-versus-random comparison on one series.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BaselineReport {
    pub sets: usize,
    pub seed: u64,
    pub sensor_count: usize,
    pub pivot_error: f64,
    /// One relative Frobenius error per random set, in draw order.
    pub random_errors: Vec<f64>,
    pub random_median: f64,
    pub random_min: f64,
    pub random_max: f64,
    /// Random sets that beat the pivot placement.
    pub random_better: usize,
}

/// `k` uniform random sets of `p` distinct cells out of `n`.
pub fn random_sensor_sets(n: usize, p: usize, k: usize, seed: u64) -> Vec<Vec<usize>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..k)
        .map(|_| rand::seq::index::sample(&mut rng, n, p).into_vec())
        .collect()
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

pub fn random_baseline(
    library: &ModeLibrary,
    truth: MatRef<'_, f64>,
    pivots: &[usize],
    k: usize,
    seed: u64,
) -> Result<BaselineReport> {
    let basis = library.basis().as_ref();
    let p = pivots.len();
    if p > basis.nrows() {
        return Err(Error::TooManySensors {
            requested: p,
            max: basis.nrows(),
        });
    }
    let pivot_error = subset_error(basis, pivots, truth)?;
    let sets = random_sensor_sets(basis.nrows(), p, k, seed);
    let random_errors = sets
        .par_iter()
        .map(|s| subset_error(basis, s, truth))
        .collect::<Result<Vec<_>>>()?;
    Ok(BaselineReport {
        sets: k,
        seed,
        sensor_count: p,
        pivot_error,
        random_median: median(&random_errors),
        random_min: random_errors.iter().copied().fold(f64::INFINITY, f64::min),
        random_max: random_errors.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        random_better: random_errors.iter().filter(|&&e| e < pivot_error).count(),
        random_errors,
    })
}
