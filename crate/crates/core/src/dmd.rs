//! Exact dynamic mode decomposition.
//!
//! Given snapshots `x_0 .. x_{m-1}` (columns of `X`), split into `X1 = [x_0 ..
//! x_{m-2}]` and `X2 = [x_1 .. x_{m-1}]`. With the truncated SVD
//! `X1 ≈ U Σ V*`, the projected propagator is `Ã = U* X2 V Σ⁻¹`. Its
//! eigenpairs `Ã W = W Λ` give the exact DMD modes `Φ = X2 V Σ⁻¹ W`, normalized
//! to unit columns, and the amplitudes `b` minimize `‖Φ b − x_0‖₂`. The data
//! are then modelled as
//!
//! ```text
//! x(t) ≈ Re Σ_k b_k ψ_k exp(ω_k t),   ω_k = ln(λ_k) / dt
//! ```
//!
//! Because the data are real, non-real eigenvalues come in conjugate pairs;
//! the pairing is made exact so the imaginary part of the expansion cancels.

use std::path::{Path, PathBuf};

use faer::{c64, Mat, MatRef};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{matrix_bytes, read_f64s, read_json, write_atomic, write_json};
use crate::linalg::{lstsq_truncated_complex, numerical_rank, thin_svd, to_complex};

/// Singular values below this fraction of the largest are never inverted.
pub const SINGULAR_CUTOFF: f64 = 1e-12;

/// How many singular directions of `X1` to keep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum RankPolicy {
    /// Keep exactly `rank` directions (fewer if the data have lower rank).
    Fixed { rank: usize },
    /// Keep the fewest directions whose squared singular values reach
    /// `fraction` of the total, optionally capped.
    Energy {
        fraction: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        max_rank: Option<usize>,
    },
}

impl Default for RankPolicy {
    fn default() -> Self {
        RankPolicy::Energy {
            fraction: 0.99,
            max_rank: None,
        }
    }
}

impl RankPolicy {
    /// Rank for the given (non-increasing, already cutoff-filtered) singular values.
    pub fn resolve(&self, singular_values: &[f64]) -> Result<usize> {
        let available = singular_values.len();
        let r = match *self {
            RankPolicy::Fixed { rank } => rank.min(available),
            RankPolicy::Energy { fraction, max_rank } => {
                if !(fraction > 0.0 && fraction <= 1.0) {
                    return Err(Error::InvalidArgument(format!(
                        "energy fraction must lie in (0, 1], got {fraction}"
                    )));
                }
                let total: f64 = singular_values.iter().map(|s| s * s).sum();
                let mut acc = 0.0;
                let mut r = available;
                for (i, s) in singular_values.iter().enumerate() {
                    acc += s * s;
                    if acc >= fraction * total {
                        r = i + 1;
                        break;
                    }
                }
                max_rank.map_or(r, |cap| r.min(cap))
            }
        };
        if r == 0 {
            return Err(Error::ZeroRank);
        }
        Ok(r)
    }
}

/// Modes, eigenvalues and amplitudes of one decomposition.
///
/// Modes are ordered by descending amplitude magnitude, with each conjugate
/// pair stored adjacently (positive imaginary part first).
#[derive(Debug, Clone, PartialEq)]
pub struct DmdResult {
    pub modes: Mat<c64>,
    pub eigenvalues: Vec<c64>,
    pub omega: Vec<c64>,
    pub amplitudes: Vec<c64>,
    pub singular_values: Vec<f64>,
    pub dt: f64,
}

/// Smallest modulus used when taking logarithms of eigenvalues.
const LOG_FLOOR: f64 = 1e-300;

fn continuous_exponent(lambda: c64, dt: f64) -> c64 {
    let lambda = if lambda.norm() < LOG_FLOOR {
        c64::new(LOG_FLOOR, 0.0)
    } else {
        lambda
    };
    lambda.ln() / dt
}

pub fn compute_dmd(x: MatRef<'_, f64>, dt: f64, policy: &RankPolicy) -> Result<DmdResult> {
    let (n, m) = (x.nrows(), x.ncols());
    if m < 2 {
        return Err(Error::TooFewSnapshots { need: 2, got: m });
    }
    if !(dt > 0.0) {
        return Err(Error::InvalidArgument(format!("dt must be positive, got {dt}")));
    }
    let x1 = x.subcols(0, m - 1);
    let x2 = x.subcols(1, m - 1);

    let svd = thin_svd(x1)?;
    let nonzero = numerical_rank(&svd.s, SINGULAR_CUTOFF);
    let r = policy.resolve(&svd.s[..nonzero])?;
    let u = svd.u.subcols(0, r);
    let v = svd.v.subcols(0, r);

    // B = X2 V Σ⁻¹ (n × r)
    let mut b = x2 * v;
    for j in 0..r {
        let inv = 1.0 / svd.s[j];
        for i in 0..n {
            b[(i, j)] *= inv;
        }
    }
    let atilde = u.transpose() * &b;
    let evd = atilde
        .eigen()
        .map_err(|e| Error::Numerical(format!("eigendecomposition failed: {e:?}")))?;
    let w = evd.U();
    let mut lambdas: Vec<c64> = evd.S().column_vector().iter().copied().collect();

    let mut phi = to_complex(b.as_ref()) * w;
    let projected = to_complex(u) * w;
    let scale = b.norm_l2().max(f64::MIN_POSITIVE);
    for k in 0..r {
        // λ = 0 leaves the exact mode empty; fall back to the projected mode.
        if phi.col(k).norm_l2() <= 1e-12 * scale {
            for i in 0..n {
                phi[(i, k)] = projected[(i, k)];
            }
        }
        normalize_phase(&mut phi, k);
    }

    let pairs = pair_conjugates(&mut lambdas, &mut phi);

    let x0: Vec<f64> = x.col(0).iter().copied().collect();
    let amps = fit_amplitudes(phi.as_ref(), &pairs, &x0)?;
    let order = order_units(pairs, &amps);

    let modes = Mat::from_fn(n, r, |i, j| phi[(i, order[j])]);
    let eigenvalues: Vec<c64> = order.iter().map(|&k| lambdas[k]).collect();
    let amplitudes: Vec<c64> = order.iter().map(|&k| amps[k]).collect();
    let omega = eigenvalues.iter().map(|&l| continuous_exponent(l, dt)).collect();
    Ok(DmdResult {
        modes,
        eigenvalues,
        omega,
        amplitudes,
        singular_values: svd.s[..r].to_vec(),
        dt,
    })
}

/// Least-squares amplitudes against `x0`, made exactly real or conjugate per unit.
fn fit_amplitudes(phi: MatRef<'_, c64>, units: &[Unit], x0: &[f64]) -> Result<Vec<c64>> {
    if phi.ncols() == 0 {
        return Ok(Vec::new());
    }
    let x0: Vec<c64> = x0.iter().map(|&v| c64::new(v, 0.0)).collect();
    let mut amps = lstsq_truncated_complex(phi, &x0, SINGULAR_CUTOFF)?;
    for unit in units {
        match *unit {
            Unit::Real(k) => amps[k] = c64::new(amps[k].re, 0.0),
            Unit::Pair(k, j) => {
                let avg = (amps[k] + amps[j].conj()) * 0.5;
                amps[k] = avg;
                amps[j] = avg.conj();
            }
        }
    }
    Ok(amps)
}

/// Mode order by descending unit amplitude; stable on discovery order.
fn order_units(mut units: Vec<Unit>, amps: &[c64]) -> Vec<usize> {
    units.sort_by(|a, b| amps[b.lead()].norm().total_cmp(&amps[a.lead()].norm()));
    units.iter().flat_map(|u| u.members()).collect()
}

#[derive(Debug, Clone, Copy)]
enum Unit {
    Real(usize),
    /// (positive-imaginary member, conjugate member)
    Pair(usize, usize),
}

impl Unit {
    fn lead(&self) -> usize {
        match *self {
            Unit::Real(k) | Unit::Pair(k, _) => k,
        }
    }

    fn members(&self) -> impl Iterator<Item = usize> {
        let (a, b) = match *self {
            Unit::Real(k) => (k, None),
            Unit::Pair(k, j) => (k, Some(j)),
        };
        std::iter::once(a).chain(b)
    }
}

/// Scales mode `k` to unit norm with its largest-magnitude entry real and positive.
fn normalize_phase(phi: &mut Mat<c64>, k: usize) {
    let norm = phi.col(k).norm_l2();
    if norm == 0.0 {
        return;
    }
    let mut best = 0;
    let mut best_mag = -1.0;
    for i in 0..phi.nrows() {
        let mag = phi[(i, k)].norm();
        if mag > best_mag * (1.0 + 1e-12) {
            best = i;
            best_mag = mag;
        }
    }
    let rot = phi[(best, k)].conj() / (best_mag * norm);
    for i in 0..phi.nrows() {
        phi[(i, k)] *= rot;
    }
}

/// Groups eigenvalues into real singletons and conjugate pairs, making each
/// pair exactly conjugate in both eigenvalue and mode.
fn pair_conjugates(lambdas: &mut [c64], phi: &mut Mat<c64>) -> Vec<Unit> {
    let r = lambdas.len();
    let mut used = vec![false; r];
    let mut units = Vec::with_capacity(r);
    for k in 0..r {
        if used[k] {
            continue;
        }
        used[k] = true;
        let l = lambdas[k];
        if l.im.abs() <= 1e-13 * l.norm().max(1e-300) {
            lambdas[k] = c64::new(l.re, 0.0);
            for i in 0..phi.nrows() {
                phi[(i, k)] = c64::new(phi[(i, k)].re, 0.0);
            }
            let norm = phi.col(k).norm_l2();
            if norm > 0.0 {
                for i in 0..phi.nrows() {
                    phi[(i, k)] /= norm;
                }
            }
            units.push(Unit::Real(k));
            continue;
        }
        let partner = (0..r)
            .filter(|&j| !used[j] && lambdas[j].im * l.im < 0.0)
            .min_by(|&a, &b| {
                (lambdas[a] - l.conj())
                    .norm()
                    .total_cmp(&(lambdas[b] - l.conj()).norm())
            });
        match partner {
            Some(j) => {
                used[j] = true;
                let (pos, neg) = if l.im > 0.0 { (k, j) } else { (j, k) };
                lambdas[neg] = lambdas[pos].conj();
                for i in 0..phi.nrows() {
                    phi[(i, neg)] = phi[(i, pos)].conj();
                }
                units.push(Unit::Pair(pos, neg));
            }
            // Unpaired complex eigenvalue: numerically impossible for a real Ã,
            // kept as-is so the mode count is preserved.
            None => units.push(Unit::Real(k)),
        }
    }
    units
}

impl DmdResult {
    /// A decomposition with no modes.
    pub fn empty(n: usize, dt: f64) -> Self {
        DmdResult {
            modes: Mat::zeros(n, 0),
            eigenvalues: Vec::new(),
            omega: Vec::new(),
            amplitudes: Vec::new(),
            singular_values: Vec::new(),
            dt,
        }
    }

    pub fn rank(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn n(&self) -> usize {
        self.modes.nrows()
    }

    /// Indices of modes that represent themselves: real modes and the
    /// positive-imaginary member of each conjugate pair.
    pub fn representatives(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.rank()).filter(|&k| self.eigenvalues[k].im >= 0.0)
    }

    /// Subset of modes, in the given order.
    pub fn select(&self, indices: &[usize]) -> DmdResult {
        DmdResult {
            modes: Mat::from_fn(self.n(), indices.len(), |i, j| self.modes[(i, indices[j])]),
            eigenvalues: indices.iter().map(|&k| self.eigenvalues[k]).collect(),
            omega: indices.iter().map(|&k| self.omega[k]).collect(),
            amplitudes: indices.iter().map(|&k| self.amplitudes[k]).collect(),
            singular_values: self.singular_values.clone(),
            dt: self.dt,
        }
    }

    /// The modes at `indices` (which must keep conjugate pairs together), with
    /// amplitudes refit to `x0` by those modes alone.
    pub fn refit(&self, indices: &[usize], x0: &[f64]) -> Result<DmdResult> {
        if x0.len() != self.n() {
            return Err(Error::DimensionMismatch(format!(
                "snapshot has {} cells, modes have {}",
                x0.len(),
                self.n()
            )));
        }
        let sub = self.select(indices);
        let mut units = Vec::new();
        let mut k = 0;
        while k < sub.rank() {
            let l = sub.eigenvalues[k];
            if l.im > 0.0 && k + 1 < sub.rank() && sub.eigenvalues[k + 1] == l.conj() {
                units.push(Unit::Pair(k, k + 1));
                k += 2;
            } else if l.im != 0.0 {
                return Err(Error::InvalidArgument("selection splits a conjugate pair".into()));
            } else {
                units.push(Unit::Real(k));
                k += 1;
            }
        }
        let amps = fit_amplitudes(sub.modes.as_ref(), &units, x0)?;
        let order = order_units(units, &amps);
        Ok(DmdResult {
            modes: Mat::from_fn(sub.n(), order.len(), |i, j| sub.modes[(i, order[j])]),
            eigenvalues: order.iter().map(|&k| sub.eigenvalues[k]).collect(),
            omega: order.iter().map(|&k| sub.omega[k]).collect(),
            amplitudes: order.iter().map(|&k| amps[k]).collect(),
            singular_values: sub.singular_values,
            dt: sub.dt,
        })
    }

    /// Real part of the modal expansion at each time offset (days from the
    /// first snapshot). Returns `n × times.len()`.
    pub fn reconstruct(&self, times: &[f64]) -> Mat<f64> {
        let (n, r) = (self.n(), self.rank());
        if r == 0 || times.is_empty() {
            return Mat::zeros(n, times.len());
        }
        let dyn_term = |k: usize, t: f64| self.amplitudes[k] * (self.omega[k] * t).exp();
        let t_re = Mat::from_fn(r, times.len(), |k, j| dyn_term(k, times[j]).re);
        let t_im = Mat::from_fn(r, times.len(), |k, j| dyn_term(k, times[j]).im);
        let p_re = Mat::from_fn(n, r, |i, k| self.modes[(i, k)].re);
        let p_im = Mat::from_fn(n, r, |i, k| self.modes[(i, k)].im);
        &p_re * &t_re - &p_im * &t_im
    }

    /// Reconstruction at the snapshot times `0, dt, .., (m-1) dt`.
    pub fn reconstruct_snapshots(&self, m: usize) -> Mat<f64> {
        let times: Vec<f64> = (0..m).map(|t| t as f64 * self.dt).collect();
        self.reconstruct(&times)
    }

    /// Imaginary part of the expansion; vanishes when conjugate pairing holds.
    pub fn imaginary_residual(&self, times: &[f64]) -> f64 {
        let mut total = 0.0;
        for &t in times {
            for i in 0..self.n() {
                let s: c64 = (0..self.rank())
                    .map(|k| self.modes[(i, k)] * self.amplitudes[k] * (self.omega[k] * t).exp())
                    .sum();
                total += s.im * s.im;
            }
        }
        total.sqrt()
    }

    pub fn write(&self, dir: impl AsRef<Path>, stem: &str) -> Result<PathBuf> {
        let dir = dir.as_ref();
        let modes_file = format!("{stem}.modes.bin");
        let mut payload = matrix_bytes(Mat::from_fn(self.n(), self.rank(), |i, j| self.modes[(i, j)].re).as_ref());
        payload.extend(matrix_bytes(
            Mat::from_fn(self.n(), self.rank(), |i, j| self.modes[(i, j)].im).as_ref(),
        ));
        write_atomic(dir.join(&modes_file), &payload)?;
        let header = DmdHeader::from_result(self, modes_file);
        let path = dir.join(format!("{stem}.json"));
        write_json(&path, &header)?;
        Ok(path)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<DmdResult> {
        let path = path.as_ref();
        let header: DmdHeader = read_json(path)?;
        let dir = path.parent().unwrap_or_else(|| Path::new("."));
        header.into_result(dir)
    }
}

fn pairs(v: &[c64]) -> Vec<[f64; 2]> {
    v.iter().map(|z| [z.re, z.im]).collect()
}

fn unpairs(v: &[[f64; 2]]) -> Vec<c64> {
    v.iter().map(|p| c64::new(p[0], p[1])).collect()
}

/// JSON header of a serialized decomposition. The sidecar payload is
/// little-endian f64 column-major real parts followed by imaginary parts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DmdHeader {
    pub rank: usize,
    pub n: usize,
    pub dt: f64,
    pub eigenvalues: Vec<[f64; 2]>,
    pub omega: Vec<[f64; 2]>,
    pub amplitudes: Vec<[f64; 2]>,
    pub singular_values: Vec<f64>,
    pub modes_file: String,
}

impl DmdHeader {
    pub(crate) fn from_result(d: &DmdResult, modes_file: String) -> Self {
        DmdHeader {
            rank: d.rank(),
            n: d.n(),
            dt: d.dt,
            eigenvalues: pairs(&d.eigenvalues),
            omega: pairs(&d.omega),
            amplitudes: pairs(&d.amplitudes),
            singular_values: d.singular_values.clone(),
            modes_file,
        }
    }

    pub(crate) fn into_result(self, dir: &Path) -> Result<DmdResult> {
        let (n, r) = (self.n, self.rank);
        if self.eigenvalues.len() != r || self.amplitudes.len() != r || self.omega.len() != r {
            return Err(Error::Format("mode count disagrees with rank".into()));
        }
        let raw = read_f64s(&dir.join(&self.modes_file), 2 * n * r)?;
        let modes = Mat::from_fn(n, r, |i, j| c64::new(raw[j * n + i], raw[n * r + j * n + i]));
        Ok(DmdResult {
            modes,
            eigenvalues: unpairs(&self.eigenvalues),
            omega: unpairs(&self.omega),
            amplitudes: unpairs(&self.amplitudes),
            singular_values: self.singular_values,
            dt: self.dt,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn constant_field_is_one_background_mode() {
        let c = [3.0, -1.0, 2.0, 0.5];
        let x = Mat::from_fn(4, 6, |i, _| c[i]);
        let d = compute_dmd(x.as_ref(), 1.0, &RankPolicy::default()).unwrap();
        assert_eq!(d.rank(), 1);
        assert!((d.eigenvalues[0] - c64::new(1.0, 0.0)).norm() < 1e-12);
        assert!(d.omega[0].norm() < 1e-12);
        let norm = c.iter().map(|v| v * v).sum::<f64>().sqrt();
        for i in 0..4 {
            let expect = c[i] / norm;
            assert!((d.modes[(i, 0)].re.abs() - expect.abs()).abs() < 1e-12);
        }
        assert!((d.amplitudes[0].norm() - norm).abs() < 1e-10);
        let rec = d.reconstruct(&[0.0, 7.5, 100.0]);
        for j in 0..3 {
            for i in 0..4 {
                assert!((rec[(i, j)] - c[i]).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn empty_times_give_empty_matrix() {
        let x = Mat::from_fn(3, 4, |i, t| (i + t) as f64);
        let d = compute_dmd(x.as_ref(), 1.0, &RankPolicy::default()).unwrap();
        let rec = d.reconstruct(&[]);
        assert_eq!((rec.nrows(), rec.ncols()), (3, 0));
    }

    #[test]
    fn errors() {
        let x = Mat::from_fn(3, 1, |_, _| 1.0);
        assert!(matches!(
            compute_dmd(x.as_ref(), 1.0, &RankPolicy::default()),
            Err(Error::TooFewSnapshots { .. })
        ));
        let z = Mat::<f64>::zeros(3, 5);
        assert!(matches!(
            compute_dmd(z.as_ref(), 1.0, &RankPolicy::default()),
            Err(Error::ZeroRank)
        ));
    }

    #[test]
    fn rank_policy_resolution() {
        let s = [10.0, 1.0, 0.1];
        assert_eq!(RankPolicy::Fixed { rank: 5 }.resolve(&s).unwrap(), 3);
        let e = |f| RankPolicy::Energy { fraction: f, max_rank: None };
        assert_eq!(e(0.99).resolve(&s).unwrap(), 1);
        assert_eq!(e(0.9999).resolve(&s).unwrap(), 2);
        assert_eq!(e(1.0).resolve(&s).unwrap(), 3);
        let capped = RankPolicy::Energy { fraction: 1.0, max_rank: Some(2) };
        assert_eq!(capped.resolve(&s).unwrap(), 2);
        assert!(e(0.0).resolve(&s).is_err());
        assert!(matches!(RankPolicy::Fixed { rank: 0 }.resolve(&s), Err(Error::ZeroRank)));
    }

    #[test]
    fn conjugate_pairs_are_adjacent_and_exact() {
        let x = Mat::from_fn(5, 40, |i, t| {
            let t = t as f64;
            (i as f64 + 1.0) * (2.0 * PI * t / 10.0).cos() + (5.0 - i as f64) * (2.0 * PI * t / 10.0).sin()
                + 0.3 * (i * i) as f64 * 0.9f64.powf(t)
        });
        let d = compute_dmd(x.as_ref(), 1.0, &RankPolicy::Fixed { rank: 3 }).unwrap();
        assert_eq!(d.rank(), 3);
        let mut k = 0;
        while k < d.rank() {
            if d.eigenvalues[k].im != 0.0 {
                assert!(d.eigenvalues[k].im > 0.0);
                assert_eq!(d.eigenvalues[k + 1], d.eigenvalues[k].conj());
                assert_eq!(d.amplitudes[k + 1], d.amplitudes[k].conj());
                k += 2;
            } else {
                k += 1;
            }
        }
        assert_eq!(d.imaginary_residual(&[0.0, 3.0, 11.0]), 0.0);
    }

    #[test]
    fn serialization_preserves_result() {
        let x = Mat::from_fn(6, 20, |i, t| ((i * 3 + t) % 7) as f64 + (t as f64 * 0.4).sin());
        let d = compute_dmd(x.as_ref(), 2.0, &RankPolicy::Fixed { rank: 4 }).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = d.write(dir.path(), "dmd").unwrap();
        assert_eq!(DmdResult::read(p).unwrap(), d);
    }

    #[test]
    fn refit_all_modes_matches_original_fit() {
        let x = Mat::from_fn(5, 40, |i, t| {
            let t = t as f64;
            (i as f64 + 1.0) * (2.0 * PI * t / 10.0).cos() + (5.0 - i as f64) * (2.0 * PI * t / 10.0).sin()
                + 0.3 * (i * i) as f64 * 0.9f64.powf(t)
        });
        let d = compute_dmd(x.as_ref(), 1.0, &RankPolicy::Fixed { rank: 3 }).unwrap();
        let x0: Vec<f64> = x.col(0).iter().copied().collect();
        let all: Vec<usize> = (0..d.rank()).collect();
        let r = d.refit(&all, &x0).unwrap();
        for k in 0..3 {
            assert!((r.amplitudes[k] - d.amplitudes[k]).norm() < 1e-9);
        }
        let pair: Vec<usize> = (0..3).filter(|&k| d.eigenvalues[k].im != 0.0).collect();
        let p = d.refit(&pair, &x0).unwrap();
        assert_eq!(p.rank(), 2);
        assert_eq!(p.amplitudes[1], p.amplitudes[0].conj());
        assert!(d.refit(&pair[..1], &x0).is_err());
    }
}
