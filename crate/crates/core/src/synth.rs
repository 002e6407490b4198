//! Synthetic multiscale fields with planted transient events.
//!
//! A field is a west–east linear background, a seasonal sinusoid whose phase
//! drifts from west to east, a sum of Gaussian plumes switched on over finite
//! time supports, and i.i.d. Gaussian noise. The planted events are returned alongside the
//! series so recovery can be scored against ground truth.

use std::path::Path;

use chrono::NaiveDate;
use faer::Mat;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{GridSpec, SnapshotSeries};
use crate::io::{write_json, write_snapshots, Dtype};
use crate::mrdmd::MrdmdTree;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum TemporalProfile {
    /// Gaussian centred in the support with σ = duration / 4, zero outside it.
    #[default]
    Gaussian,
    Boxcar,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventSpec {
    pub center: (usize, usize),
    /// Spatial standard deviation in cells.
    pub sigma: f64,
    pub t_start: usize,
    pub duration: usize,
    pub peak: f64,
    #[serde(default)]
    pub profile: TemporalProfile,
}

impl EventSpec {
    /// Temporal weight in `[0, 1]` at day `t`.
    pub fn temporal(&self, t: usize) -> f64 {
        if t < self.t_start || t >= self.t_start + self.duration {
            return 0.0;
        }
        match self.profile {
            TemporalProfile::Boxcar => 1.0,
            TemporalProfile::Gaussian => {
                let centre = self.t_start as f64 + self.duration as f64 / 2.0;
                let s = self.duration as f64 / 4.0;
                (-0.5 * ((t as f64 - centre) / s).powi(2)).exp()
            }
        }
    }

    /// Spatial weight in `[0, 1]` at `(row, col)`.
    pub fn spatial(&self, row: usize, col: usize) -> f64 {
        let dr = row as f64 - self.center.0 as f64;
        let dc = col as f64 - self.center.1 as f64;
        (-0.5 * (dr * dr + dc * dc) / (self.sigma * self.sigma)).exp()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Background {
    pub west: f64,
    pub east: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Seasonal {
    pub amplitude: f64,
    pub period_days: f64,
    /// Phase lag in radians of the easternmost column relative to the
    /// westernmost, varying linearly in between. A spatially uniform cycle
    /// (`0`) has a single spatial pattern, which exact DMD cannot resolve into
    /// an oscillating conjugate pair.
    #[serde(default = "default_phase_lag")]
    pub phase_lag: f64,
}

fn default_phase_lag() -> f64 {
    std::f64::consts::FRAC_PI_2
}

impl Seasonal {
    pub fn none() -> Self {
        Seasonal {
            amplitude: 0.0,
            period_days: 365.0,
            phase_lag: default_phase_lag(),
        }
    }

    /// Seasonal offset at day `t` in column `col` of `cols`.
    pub fn value(&self, t: usize, col: usize, cols: usize) -> f64 {
        if self.amplitude == 0.0 {
            return 0.0;
        }
        let lag = if cols > 1 {
            self.phase_lag * col as f64 / (cols - 1) as f64
        } else {
            0.0
        };
        self.amplitude * (2.0 * std::f64::consts::PI * t as f64 / self.period_days - lag).sin()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub rows: usize,
    pub cols: usize,
    pub n_days: usize,
    #[serde(default = "default_cell_km")]
    pub cell_size_km: f64,
    #[serde(default)]
    pub origin_lat: f64,
    #[serde(default)]
    pub origin_lon: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cell_size_deg: Option<f64>,
    #[serde(default = "default_start")]
    pub start_date: NaiveDate,
    pub background: Background,
    pub seasonal: Seasonal,
    #[serde(default)]
    pub events: Vec<EventSpec>,
    pub noise_sigma: f64,
    pub seed: u64,
}

fn default_cell_km() -> f64 {
    10.0
}

fn default_start() -> NaiveDate {
    NaiveDate::from_ymd_opt(2000, 1, 1).unwrap()
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.rows == 0 || self.cols == 0 || self.n_days == 0 {
            return bad("grid and time span must be non-empty".into());
        }
        if !(self.noise_sigma >= 0.0) {
            return bad(format!("noise sigma must be non-negative, got {}", self.noise_sigma));
        }
        if self.seasonal.amplitude != 0.0 && !(self.seasonal.period_days > 0.0) {
            return bad("seasonal period must be positive".into());
        }
        for (i, e) in self.events.iter().enumerate() {
            if e.center.0 >= self.rows || e.center.1 >= self.cols {
                return bad(format!("event {i} centre {:?} lies outside the grid", e.center));
            }
            if e.duration == 0 || e.t_start + e.duration > self.n_days {
                return bad(format!("event {i} support exceeds the time span"));
            }
            if !(e.sigma > 0.0) {
                return bad(format!("event {i} spatial sigma must be positive"));
            }
        }
        Ok(())
    }
}

/// The planted events, stored next to generated data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub spec: SynthSpec,
    pub events: Vec<EventSpec>,
}

pub fn generate(spec: &SynthSpec) -> Result<(SnapshotSeries, GroundTruth)> {
    spec.validate()?;
    let (rows, cols) = (spec.rows, spec.cols);
    let grid = GridSpec::new(
        rows,
        cols,
        spec.cell_size_km,
        spec.origin_lat,
        spec.origin_lon,
        vec![true; rows * cols],
    )?
    .with_cell_size_deg(spec.cell_size_deg);

    let gradient = |c: usize| {
        if cols == 1 {
            spec.background.west
        } else {
            spec.background.west + (spec.background.east - spec.background.west) * c as f64 / (cols - 1) as f64
        }
    };
    let n = rows * cols;
    let mut values = Mat::from_fn(n, spec.n_days, |k, t| {
        let (r, c) = (k / cols, k % cols);
        let seasonal = spec.seasonal.value(t, c, cols);
        let events: f64 = spec
            .events
            .iter()
            .map(|e| {
                let w = e.temporal(t);
                if w == 0.0 {
                    0.0
                } else {
                    e.peak * w * e.spatial(r, c)
                }
            })
            .sum();
        gradient(c) + seasonal + events
    });
    if spec.noise_sigma > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let normal = Normal::new(0.0, spec.noise_sigma).map_err(|e| Error::InvalidArgument(e.to_string()))?;
        for t in 0..spec.n_days {
            for k in 0..n {
                values[(k, t)] += normal.sample(&mut rng);
            }
        }
    }
    let series = SnapshotSeries::new(grid, values, spec.start_date, 1)?;
    Ok((
        series,
        GroundTruth {
            spec: spec.clone(),
            events: spec.events.clone(),
        },
    ))
}

/// Writes the series in the standard snapshot format plus `truth.json`.
pub fn write_generated(series: &SnapshotSeries, truth: &GroundTruth, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    write_snapshots(series, dir, Dtype::F64)?;
    write_json(dir.join("truth.json"), truth)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EventRecovery {
    pub event: usize,
    pub hit: bool,
    /// Best overlap fraction of the event support by a significant-mode window
    /// whose spatial peak lies near the event.
    pub overlap: f64,
    /// `(level, bin)` of the best matching node.
    pub node: Option<(usize, usize)>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RecoveryScore {
    pub events: Vec<EventRecovery>,
    pub hits: usize,
}

impl RecoveryScore {
    /// Fraction of events hit; 1 when nothing was planted.
    pub fn fraction(&self) -> f64 {
        if self.events.is_empty() {
            1.0
        } else {
            self.hits as f64 / self.events.len() as f64
        }
    }
}

/// Minimum share of an event's support a node window must cover.
pub const HIT_OVERLAP: f64 = 0.5;
/// Maximum distance, in event sigmas, between a mode's peak and the event centre.
pub const HIT_RADIUS_SIGMAS: f64 = 2.0;

/// Scores planted events against the significant non-background modes of a tree.
pub fn score_recovery(tree: &MrdmdTree, grid: &GridSpec, events: &[EventSpec]) -> RecoveryScore {
    let results: Vec<EventRecovery> = events
        .iter()
        .enumerate()
        .map(|(i, ev)| {
            let support = (ev.t_start as f64, (ev.t_start + ev.duration) as f64);
            let mut best: Option<(f64, (usize, usize))> = None;
            for node in tree.nodes.iter().filter(|n| n.level > 0) {
                let lo = (tree.window_offset + node.start) as f64 * tree.dt;
                let hi = (tree.window_offset + node.end) as f64 * tree.dt;
                let overlap = (hi.min(support.1) - lo.max(support.0)).max(0.0) / (support.1 - support.0);
                if overlap < HIT_OVERLAP {
                    continue;
                }
                let near = node.significant_modes().into_iter().any(|k| {
                    let peak = peak_cell(node.slow.modes.col(k).iter().map(|z| z.norm()));
                    let (r, c) = grid.cell_position(peak);
                    let d = ((r as f64 - ev.center.0 as f64).powi(2) + (c as f64 - ev.center.1 as f64).powi(2)).sqrt();
                    d <= HIT_RADIUS_SIGMAS * ev.sigma
                });
                if near && best.is_none_or(|(o, _)| overlap > o) {
                    best = Some((overlap, (node.level, node.bin_index)));
                }
            }
            EventRecovery {
                event: i,
                hit: best.is_some(),
                overlap: best.map_or(0.0, |b| b.0),
                node: best.map(|b| b.1),
            }
        })
        .collect();
    RecoveryScore {
        hits: results.iter().filter(|r| r.hit).count(),
        events: results,
    }
}

fn peak_cell(mags: impl Iterator<Item = f64>) -> usize {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, m) in mags.enumerate() {
        if m > best.1 {
            best = (i, m);
        }
    }
    best.0
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec() -> SynthSpec {
        SynthSpec {
            rows: 4,
            cols: 5,
            n_days: 30,
            cell_size_km: 10.0,
            origin_lat: 49.0,
            origin_lon: -125.0,
            cell_size_deg: Some(0.1),
            start_date: default_start(),
            background: Background { west: 2.0, east: 10.0 },
            seasonal: Seasonal::none(),
            events: vec![],
            noise_sigma: 0.0,
            seed: 1,
        }
    }

    #[test]
    fn background_only() {
        let (s, truth) = generate(&spec()).unwrap();
        assert!(truth.events.is_empty());
        for t in 0..30 {
            for k in 0..20 {
                let c = k % 5;
                assert!((s.values()[(k, t)] - (2.0 + 2.0 * c as f64)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn boxcar_peak() {
        let mut sp = spec();
        sp.events.push(EventSpec {
            center: (2, 3),
            sigma: 1.0,
            t_start: 10,
            duration: 5,
            peak: 7.0,
            profile: TemporalProfile::Boxcar,
        });
        let (s, _) = generate(&sp).unwrap();
        let k = s.grid().valid_index(2, 3).unwrap();
        let max = (0..30).map(|t| s.values()[(k, t)]).fold(f64::MIN, f64::max);
        assert!((max - (8.0 + 7.0)).abs() < 1e-12);
        assert_eq!(s.values()[(k, 9)], 8.0);
        assert_eq!(s.values()[(k, 15)], 8.0);
    }

    #[test]
    fn gaussian_profile_peaks_at_support_centre() {
        let e = EventSpec {
            center: (0, 0),
            sigma: 1.0,
            t_start: 16,
            duration: 16,
            peak: 1.0,
            profile: TemporalProfile::Gaussian,
        };
        assert_eq!(e.temporal(24), 1.0);
        assert_eq!(e.temporal(15), 0.0);
        assert_eq!(e.temporal(32), 0.0);
        assert!((e.temporal(16) - (-2.0f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn seeded_noise_is_reproducible() {
        let mut sp = spec();
        sp.noise_sigma = 0.5;
        let (a, _) = generate(&sp).unwrap();
        let (b, _) = generate(&sp).unwrap();
        assert_eq!(a.values(), b.values());
        sp.seed = 2;
        let (c, _) = generate(&sp).unwrap();
        assert_ne!(a.values(), c.values());
    }

    #[test]
    fn invalid_specs() {
        let mut sp = spec();
        sp.events.push(EventSpec {
            center: (9, 0),
            sigma: 1.0,
            t_start: 0,
            duration: 3,
            peak: 1.0,
            profile: TemporalProfile::Boxcar,
        });
        assert!(generate(&sp).is_err());
        sp.events[0].center = (0, 0);
        sp.events[0].t_start = 28;
        assert!(generate(&sp).is_err());
        let mut sp = spec();
        sp.noise_sigma = -1.0;
        assert!(generate(&sp).is_err());
    }
}
