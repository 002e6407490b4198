//! Multiresolution DMD over a dyadic tree of time windows.
//!
//! The root node runs DMD on the whole window and keeps its *slow* modes,
//! those completing at most `rho` oscillation cycles within the window. Their
//! reconstruction is subtracted, the residual is halved in time, and each half
//! is decomposed again, down to `max_level` or until a node would hold fewer
//! than [`MIN_NODE_SNAPSHOTS`] snapshots. Summing every node's slow
//! reconstruction over its own window and adding the terminal residual gives
//! back the input exactly (up to rounding).

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use chrono::{Duration, NaiveDate};
use faer::{Mat, MatMut, MatRef};
use serde::{Deserialize, Serialize};

use crate::dmd::{compute_dmd, DmdHeader, DmdResult, RankPolicy};
use crate::error::{Error, Result};
use crate::grid::{GridSpec, SnapshotSeries};
use crate::io::{read_json, write_json};
use crate::library::{ColumnPart, ColumnProvenance, ModeLibrary};

/// Nodes shorter than this are not decomposed.
pub const MIN_NODE_SNAPSHOTS: usize = 4;

/// Recursion stops once the residual falls below this fraction of the
/// node's input-window norm.
pub const RESIDUAL_STOP: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MrdmdConfig {
    /// Deepest level index; the root is level 0.
    pub max_level: usize,
    /// Maximum oscillation cycles per window for a mode to count as slow.
    pub rho: f64,
    /// Significance threshold relative to the background contribution.
    pub tolerance: f64,
    pub rank_policy: RankPolicy,
    #[serde(default)]
    pub amplitude_fit: AmplitudeFit,
    /// Keep the terminal residual matrix in the tree.
    #[serde(default)]
    pub keep_residual: bool,
}

/// How a node's slow-mode amplitudes are obtained from its first snapshot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AmplitudeFit {
    /// Least squares of the slow modes alone.
    #[default]
    Slow,
    /// Keep the amplitudes of the fit over all of the node's modes.
    All,
}

impl Default for MrdmdConfig {
    fn default() -> Self {
        MrdmdConfig {
            max_level: 12,
            rho: 1.0,
            tolerance: 1e-2,
            rank_policy: RankPolicy::default(),
            amplitude_fit: AmplitudeFit::Slow,
            keep_residual: false,
        }
    }
}

/// True when a mode completes at most `rho` cycles within `window_days`.
pub fn classify_slow(omega: faer::c64, window_days: f64, rho: f64) -> bool {
    omega.im.abs() / (2.0 * PI) * window_days <= rho
}

/// True when the mode contribution `amplitude * spatial_norm` exceeds
/// `tolerance` times the background contribution.
pub fn significance_test(amplitude: f64, spatial_norm: f64, background: f64, tolerance: f64) -> bool {
    amplitude * spatial_norm > tolerance * background
}

#[derive(Debug, Clone, PartialEq)]
pub struct MrdmdNode {
    pub level: usize,
    pub bin_index: usize,
    /// First snapshot of the node, relative to the tree's window.
    pub start: usize,
    /// One past the last snapshot.
    pub end: usize,
    /// Slow modes removed at this node.
    pub slow: DmdResult,
    /// Contribution norm `‖b_k ψ_k‖₂` per slow mode.
    pub contribution: Vec<f64>,
    pub significant: Vec<bool>,
    /// Number of modes classified fast and passed down.
    pub n_fast: usize,
    /// Frobenius norm of the residual left after removing the slow modes.
    pub residual_norm: f64,
}

impl MrdmdNode {
    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end == self.start
    }

    pub fn n_slow(&self) -> usize {
        self.slow.rank()
    }

    /// Slow-mode reconstruction over the node's own window.
    pub fn reconstruct(&self) -> Mat<f64> {
        self.slow.reconstruct_snapshots(self.len())
    }

    /// Representative significant modes (one per conjugate pair).
    pub fn significant_modes(&self) -> Vec<usize> {
        self.slow
            .representatives()
            .filter(|&k| self.significant[k])
            .collect()
    }
}

/// Result of decomposing one time window.
#[derive(Debug, Clone)]
pub struct MrdmdTree {
    /// Nodes in breadth-first `(level, bin_index)` order.
    pub nodes: Vec<MrdmdNode>,
    pub n: usize,
    pub n_snapshots: usize,
    pub dt: f64,
    pub start_date: NaiveDate,
    /// Offset of this window's first snapshot in the full series.
    pub window_offset: usize,
    /// Largest slow-mode contribution at the root.
    pub background_norm: f64,
    pub config: MrdmdConfig,
    /// Input minus every node's slow reconstruction, when requested.
    pub residual: Option<Mat<f64>>,
}

struct Ctx<'a> {
    input: MatRef<'a, f64>,
    dt: f64,
    config: &'a MrdmdConfig,
}

struct Analysis {
    slow: DmdResult,
    n_fast: usize,
    residual: Mat<f64>,
}

impl Ctx<'_> {
    fn analyze(&self, data: MatRef<'_, f64>) -> Result<Analysis> {
        let len = data.ncols();
        let full = match compute_dmd(data, self.dt, &self.config.rank_policy) {
            Ok(d) => d,
            Err(Error::ZeroRank) => DmdResult::empty(data.nrows(), self.dt),
            Err(e) => return Err(e),
        };
        let window_days = len as f64 * self.dt;
        let slow_idx: Vec<usize> = (0..full.rank())
            .filter(|&k| classify_slow(full.omega[k], window_days, self.config.rho))
            .collect();
        let slow = match self.config.amplitude_fit {
            AmplitudeFit::All => full.select(&slow_idx),
            AmplitudeFit::Slow => {
                let x0: Vec<f64> = data.col(0).iter().copied().collect();
                full.refit(&slow_idx, &x0)?
            }
        };
        let residual = data - slow.reconstruct_snapshots(len);
        Ok(Analysis {
            n_fast: full.rank() - slow.rank(),
            slow,
            residual,
        })
    }

    fn node(&self, level: usize, bin: usize, start: usize, a: &Analysis, background: f64) -> MrdmdNode {
        let contribution: Vec<f64> = (0..a.slow.rank())
            .map(|k| a.slow.amplitudes[k].norm() * a.slow.modes.col(k).norm_l2())
            .collect();
        let significant = contribution
            .iter()
            .map(|&c| significance_test(c, 1.0, background, self.config.tolerance))
            .collect();
        MrdmdNode {
            level,
            bin_index: bin,
            start,
            end: start + a.residual.ncols(),
            slow: a.slow.clone(),
            contribution,
            significant,
            n_fast: a.n_fast,
            residual_norm: a.residual.norm_l2(),
        }
    }

    /// Whether a node's residual should be split further.
    fn descends(&self, level: usize, start: usize, residual: MatRef<'_, f64>) -> bool {
        let len = residual.ncols();
        let window = self.input.subcols(start, len).norm_l2();
        level < self.config.max_level
            && len / 2 >= MIN_NODE_SNAPSHOTS
            && residual.norm_l2() > RESIDUAL_STOP * window
    }

    /// Decomposes the halves of a parent residual, writing terminal residuals
    /// into `out`.
    fn children(
        &self,
        level: usize,
        bin: usize,
        start: usize,
        residual: MatRef<'_, f64>,
        background: f64,
        out: Option<MatMut<'_, f64>>,
    ) -> Result<Vec<MrdmdNode>> {
        let half = residual.ncols() / 2;
        let (left, right) = residual.split_at_col(half);
        let (out_l, out_r) = match out {
            Some(o) => {
                let (a, b) = o.split_at_col_mut(half);
                (Some(a), Some(b))
            }
            None => (None, None),
        };
        let (l, r) = rayon::join(
            || self.subtree(level + 1, 2 * bin, start, left, background, out_l),
            || self.subtree(level + 1, 2 * bin + 1, start + half, right, background, out_r),
        );
        let mut nodes = l?;
        nodes.extend(r?);
        Ok(nodes)
    }

    fn subtree(
        &self,
        level: usize,
        bin: usize,
        start: usize,
        data: MatRef<'_, f64>,
        background: f64,
        out: Option<MatMut<'_, f64>>,
    ) -> Result<Vec<MrdmdNode>> {
        if data.ncols() < MIN_NODE_SNAPSHOTS {
            if let Some(mut o) = out {
                o.copy_from(data);
            }
            return Ok(Vec::new());
        }
        let a = self.analyze(data)?;
        let node = self.node(level, bin, start, &a, background);
        let mut nodes = vec![node];
        if self.descends(level, start, a.residual.as_ref()) {
            nodes.extend(self.children(level, bin, start, a.residual.as_ref(), background, out)?);
        } else if let Some(mut o) = out {
            o.copy_from(a.residual.as_ref());
        }
        Ok(nodes)
    }
}

/// Decomposes a snapshot series (or window) into an mrDMD tree.
pub fn decompose(series: &SnapshotSeries, config: &MrdmdConfig) -> Result<MrdmdTree> {
    let mut tree = decompose_matrix(series.values().as_ref(), series.dt_days() as f64, config)?;
    tree.start_date = series.start_date();
    Ok(tree)
}

/// Decomposes an `n × m` matrix sampled every `dt` days.
pub fn decompose_matrix(x: MatRef<'_, f64>, dt: f64, config: &MrdmdConfig) -> Result<MrdmdTree> {
    if x.nrows() == 0 || x.ncols() == 0 {
        return Err(Error::InvalidArgument("empty snapshot series".into()));
    }
    if !(config.tolerance > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "tolerance must be positive, got {}",
            config.tolerance
        )));
    }
    if !(config.rho >= 0.0) {
        return Err(Error::InvalidArgument(format!("rho must be non-negative, got {}", config.rho)));
    }
    let ctx = Ctx {
        input: x,
        dt,
        config,
    };
    let root = ctx.analyze(x)?;
    let background = (0..root.slow.rank())
        .map(|k| root.slow.amplitudes[k].norm() * root.slow.modes.col(k).norm_l2())
        .fold(0.0, f64::max);
    let mut residual = config.keep_residual.then(|| Mat::<f64>::zeros(x.nrows(), x.ncols()));
    let mut nodes = vec![ctx.node(0, 0, 0, &root, background)];
    if ctx.descends(0, 0, root.residual.as_ref()) {
        nodes.extend(ctx.children(
            0,
            0,
            0,
            root.residual.as_ref(),
            background,
            residual.as_mut().map(|r| r.as_mut()),
        )?);
    } else if let Some(r) = residual.as_mut() {
        r.copy_from(root.residual.as_ref());
    }
    nodes.sort_by_key(|n| (n.level, n.bin_index));
    Ok(MrdmdTree {
        nodes,
        n: x.nrows(),
        n_snapshots: x.ncols(),
        dt,
        start_date: NaiveDate::from_ymd_opt(2000, 1, 1).unwrap(),
        window_offset: 0,
        background_norm: background,
        config: config.clone(),
        residual,
    })
}

/// Which retained modes enter the library.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LibraryInclude {
    All,
    SignificantOnly,
}

/// Significant-mode counts excluding the level-0 background.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct SignificanceCounts {
    pub by_node: BTreeMap<(usize, usize), usize>,
    pub by_level: BTreeMap<usize, usize>,
    pub total: usize,
}

/// One row of the time–frequency map.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TimeFrequencyRow {
    pub level: usize,
    pub bin: usize,
    pub t_start: NaiveDate,
    /// Exclusive end date.
    pub t_end: NaiveDate,
    pub n_significant: usize,
}

impl MrdmdTree {
    pub fn node(&self, level: usize, bin: usize) -> Option<&MrdmdNode> {
        self.nodes
            .iter()
            .find(|n| n.level == level && n.bin_index == bin)
    }

    pub fn root(&self) -> &MrdmdNode {
        &self.nodes[0]
    }

    pub fn depth(&self) -> usize {
        self.nodes.iter().map(|n| n.level).max().unwrap_or(0)
    }

    /// Sum of every node's slow reconstruction placed on its window.
    pub fn reconstruct(&self) -> Mat<f64> {
        let mut total = Mat::<f64>::zeros(self.n, self.n_snapshots);
        for node in &self.nodes {
            let rec = node.reconstruct();
            let mut dst = total.as_mut().subcols_mut(node.start, node.len());
            dst += &rec;
        }
        total
    }

    pub fn date_at(&self, offset: usize) -> NaiveDate {
        self.start_date + Duration::days((offset as f64 * self.dt).round() as i64)
    }

    pub fn count_significant_modes(&self) -> SignificanceCounts {
        let mut counts = SignificanceCounts::default();
        for node in self.nodes.iter().filter(|n| n.level > 0) {
            let k = node.significant_modes().len();
            if k > 0 {
                *counts.by_node.entry((node.level, node.bin_index)).or_default() += k;
                *counts.by_level.entry(node.level).or_default() += k;
                counts.total += k;
            }
        }
        counts
    }

    /// One row per decomposed node; the level-0 count includes the background.
    pub fn time_frequency_map(&self) -> Vec<TimeFrequencyRow> {
        self.nodes
            .iter()
            .map(|n| TimeFrequencyRow {
                level: n.level,
                bin: n.bin_index,
                t_start: self.date_at(n.start),
                t_end: self.date_at(n.end),
                n_significant: n.significant_modes().len(),
            })
            .collect()
    }

    /// Assembles the retained modes into real, unit-norm library columns.
    ///
    /// Nodes are visited breadth-first; within a node modes are already in
    /// descending amplitude order. Each conjugate pair contributes the real
    /// and imaginary parts of its positive-frequency member.
    pub fn build_library(&self, window: usize, include: LibraryInclude) -> Result<ModeLibrary> {
        let mut columns: Vec<Vec<f64>> = Vec::new();
        let mut provenance = Vec::new();
        for node in &self.nodes {
            for k in node.slow.representatives() {
                if include == LibraryInclude::SignificantOnly && !node.significant[k] {
                    continue;
                }
                let mode = node.slow.modes.col(k);
                let prov = |part| ColumnProvenance {
                    window,
                    level: node.level,
                    bin_index: node.bin_index,
                    t_start: (self.window_offset + node.start) as f64 * self.dt,
                    t_end: (self.window_offset + node.end) as f64 * self.dt,
                    eigenvalue: [node.slow.eigenvalues[k].re, node.slow.eigenvalues[k].im],
                    amplitude: node.slow.amplitudes[k].norm(),
                    significant: node.significant[k],
                    part,
                };
                let re: Vec<f64> = mode.iter().map(|z| z.re).collect();
                let im: Vec<f64> = mode.iter().map(|z| z.im).collect();
                if let Some(c) = unit(re) {
                    columns.push(c);
                    provenance.push(prov(ColumnPart::Real));
                }
                if let Some(c) = unit(im) {
                    columns.push(c);
                    provenance.push(prov(ColumnPart::Imaginary));
                }
            }
        }
        if columns.is_empty() {
            return Err(Error::EmptyLibrary);
        }
        let basis = Mat::from_fn(self.n, columns.len(), |i, j| columns[j][i]);
        ModeLibrary::new(basis, provenance)
    }

    /// Writes `{stem}.json` and per-node `{stem}_L{level}_B{bin}.modes.bin` sidecars.
    pub fn write(&self, dir: impl AsRef<Path>, stem: &str) -> Result<PathBuf> {
        let dir = dir.as_ref();
        let mut nodes = Vec::with_capacity(self.nodes.len());
        for node in &self.nodes {
            let node_stem = format!("{stem}_L{}_B{}", node.level, node.bin_index);
            node.slow.write(dir, &node_stem)?;
            nodes.push(NodeRecord {
                level: node.level,
                bin_index: node.bin_index,
                start: node.start,
                end: node.end,
                t_start: self.date_at(node.start),
                t_end: self.date_at(node.end),
                n_slow: node.n_slow(),
                n_fast: node.n_fast,
                contribution: node.contribution.clone(),
                significant: node.significant.clone(),
                residual_norm: node.residual_norm,
                dmd: DmdHeader::from_result(&node.slow, format!("{node_stem}.modes.bin")),
            });
        }
        let record = TreeRecord {
            n: self.n,
            n_snapshots: self.n_snapshots,
            dt: self.dt,
            start_date: self.start_date,
            window_offset: self.window_offset,
            background_norm: self.background_norm,
            config: self.config.clone(),
            nodes,
        };
        // Node headers are embedded; drop the standalone per-node JSON files.
        for node in &self.nodes {
            let _ = std::fs::remove_file(dir.join(format!("{stem}_L{}_B{}.json", node.level, node.bin_index)));
        }
        let path = dir.join(format!("{stem}.json"));
        write_json(&path, &record)?;
        Ok(path)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<MrdmdTree> {
        let path = path.as_ref();
        let record: TreeRecord = read_json(path)?;
        let dir = path.parent().unwrap_or_else(|| Path::new("."));
        let nodes = record
            .nodes
            .into_iter()
            .map(|r| {
                Ok(MrdmdNode {
                    level: r.level,
                    bin_index: r.bin_index,
                    start: r.start,
                    end: r.end,
                    slow: r.dmd.into_result(dir)?,
                    contribution: r.contribution,
                    significant: r.significant,
                    n_fast: r.n_fast,
                    residual_norm: r.residual_norm,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(MrdmdTree {
            nodes,
            n: record.n,
            n_snapshots: record.n_snapshots,
            dt: record.dt,
            start_date: record.start_date,
            window_offset: record.window_offset,
            background_norm: record.background_norm,
            config: record.config,
            residual: None,
        })
    }
}

fn unit(v: Vec<f64>) -> Option<Vec<f64>> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    (norm > 1e-12).then(|| v.into_iter().map(|x| x / norm).collect())
}

#[derive(Serialize, Deserialize)]
struct NodeRecord {
    level: usize,
    bin_index: usize,
    start: usize,
    end: usize,
    t_start: NaiveDate,
    t_end: NaiveDate,
    n_slow: usize,
    n_fast: usize,
    contribution: Vec<f64>,
    significant: Vec<bool>,
    residual_norm: f64,
    dmd: DmdHeader,
}

#[derive(Serialize, Deserialize)]
struct TreeRecord {
    n: usize,
    n_snapshots: usize,
    dt: f64,
    start_date: NaiveDate,
    window_offset: usize,
    background_norm: f64,
    config: MrdmdConfig,
    nodes: Vec<NodeRecord>,
}

/// How per-window libraries become sensor sites.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum MergeMode {
    /// Concatenate window libraries and pivot once.
    #[default]
    Merged,
    /// Pivot each window's library separately and take the union.
    Separate,
}

/// A (one- or two-window) decomposition of one series, as stored on disk.
#[derive(Debug, Clone)]
pub struct Decomposition {
    pub grid: GridSpec,
    pub windows: Vec<MrdmdTree>,
}

/// File name of the index written by [`Decomposition::write`].
pub const DECOMPOSITION_FILE: &str = "decomposition.json";

#[derive(Serialize, Deserialize)]
struct DecompositionRecord {
    grid: GridSpec,
    windows: Vec<String>,
}

impl Decomposition {
    /// Decomposes the whole series, or its first and last `window_len`
    /// snapshots when `two_window` is set.
    pub fn run(
        series: &SnapshotSeries,
        config: &MrdmdConfig,
        window_len: Option<usize>,
        two_window: bool,
    ) -> Result<Decomposition> {
        let m = series.n_snapshots();
        let len = window_len.unwrap_or(m).min(m);
        let offsets: Vec<usize> = if two_window {
            if m < len {
                return Err(Error::TooFewSnapshots { need: len, got: m });
            }
            vec![0, m - len]
        } else {
            vec![0]
        };
        let windows = offsets
            .into_iter()
            .map(|off| {
                let w = series.window(off, len)?;
                let mut tree = decompose(&w, config)?;
                tree.window_offset = off;
                Ok(tree)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Decomposition {
            grid: series.grid().clone(),
            windows,
        })
    }

    pub fn libraries(&self, include: LibraryInclude) -> Result<Vec<ModeLibrary>> {
        self.windows
            .iter()
            .enumerate()
            .map(|(w, t)| t.build_library(w, include))
            .collect()
    }

    /// Column-wise concatenation of every window's library.
    pub fn merged_library(&self, include: LibraryInclude) -> Result<ModeLibrary> {
        ModeLibrary::concat(&self.libraries(include)?)
    }

    pub fn write(&self, dir: impl AsRef<Path>) -> Result<PathBuf> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut names = Vec::new();
        for (w, tree) in self.windows.iter().enumerate() {
            let stem = format!("window{w}");
            tree.write(dir, &stem)?;
            names.push(format!("{stem}.json"));
        }
        let path = dir.join(DECOMPOSITION_FILE);
        write_json(
            &path,
            &DecompositionRecord {
                grid: self.grid.clone(),
                windows: names,
            },
        )?;
        Ok(path)
    }

    pub fn read(dir: impl AsRef<Path>) -> Result<Decomposition> {
        let dir = dir.as_ref();
        let index = if dir.is_dir() {
            dir.join(DECOMPOSITION_FILE)
        } else {
            dir.to_path_buf()
        };
        let base = index.parent().unwrap_or_else(|| Path::new("."));
        let record: DecompositionRecord = read_json(&index)?;
        let windows = record
            .windows
            .iter()
            .map(|w| MrdmdTree::read(base.join(w)))
            .collect::<Result<Vec<_>>>()?;
        Ok(Decomposition {
            grid: record.grid,
            windows,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use faer::c64;

    #[test]
    fn slow_criterion() {
        assert!(classify_slow(c64::new(0.0, 0.0), 10.0, 1.0));
        let omega = |period: f64| c64::new(0.0, 2.0 * PI / period);
        assert!(classify_slow(omega(8192.0), 4096.0, 1.0));
        assert!(!classify_slow(omega(100.0), 4096.0, 1.0));
        assert!(classify_slow(omega(100.0), 4096.0, 41.0));
        assert!(classify_slow(omega(-4096.0), 4096.0, 1.0));
    }

    #[test]
    fn significance_threshold() {
        assert!(!significance_test(0.0, 1.0, 5.0, 1e-2));
        assert!(significance_test(5.0, 1.0, 5.0, 1e-2));
        assert!(significance_test(0.06, 1.0, 5.0, 1e-2));
        assert!(!significance_test(0.04, 1.0, 5.0, 1e-2));
    }

    #[test]
    fn constant_field_single_background_node() {
        let c = [4.0, 1.0, 2.0, 3.0, 5.0];
        let x = Mat::from_fn(5, 64, |i, _| c[i]);
        let cfg = MrdmdConfig {
            max_level: 5,
            keep_residual: true,
            ..Default::default()
        };
        let tree = decompose_matrix(x.as_ref(), 1.0, &cfg).unwrap();
        assert_eq!(tree.nodes.len(), 1);
        assert_eq!(tree.root().n_slow(), 1);
        assert!(tree.root().slow.omega[0].norm() < 1e-12);
        assert_eq!(tree.root().significant, vec![true]);
        assert_eq!(tree.count_significant_modes().total, 0);
        let lib = tree.build_library(0, LibraryInclude::All).unwrap();
        assert_eq!(lib.n_columns(), 1);
        let tf = tree.time_frequency_map();
        assert_eq!(tf.len(), 1);
        assert_eq!(tf[0].n_significant, 1);
    }

    #[test]
    fn max_level_zero_is_plain_dmd_slow_part() {
        let x = Mat::from_fn(6, 32, |i, t| {
            let t = t as f64;
            let w = 2.0 * PI * t / 8.0;
            (i + 1) as f64 + i as f64 * w.sin() + (i * i) as f64 * w.cos() + 0.01 * (i * i * i) as f64 * 0.98f64.powf(t)
        });
        let cfg = MrdmdConfig {
            max_level: 0,
            rank_policy: RankPolicy::Fixed { rank: 4 },
            ..Default::default()
        };
        let tree = decompose_matrix(x.as_ref(), 1.0, &cfg).unwrap();
        assert_eq!(tree.nodes.len(), 1);
        let plain = compute_dmd(x.as_ref(), 1.0, &cfg.rank_policy).unwrap();
        let slow: Vec<usize> = (0..plain.rank())
            .filter(|&k| classify_slow(plain.omega[k], 32.0, 1.0))
            .collect();
        let x0: Vec<f64> = x.col(0).iter().copied().collect();
        assert_eq!(tree.root().slow, plain.refit(&slow, &x0).unwrap());
        assert!(tree.root().n_fast > 0);
    }

    #[test]
    fn zero_input_yields_empty_root() {
        let x = Mat::<f64>::zeros(3, 16);
        let tree = decompose_matrix(x.as_ref(), 1.0, &MrdmdConfig::default()).unwrap();
        assert_eq!(tree.nodes.len(), 1);
        assert_eq!(tree.root().n_slow(), 0);
        assert!(matches!(
            tree.build_library(0, LibraryInclude::All),
            Err(Error::EmptyLibrary)
        ));
    }

    #[test]
    fn rejects_bad_config() {
        let x = Mat::from_fn(2, 8, |i, t| (i + t) as f64);
        let cfg = MrdmdConfig {
            tolerance: 0.0,
            ..Default::default()
        };
        assert!(decompose_matrix(x.as_ref(), 1.0, &cfg).is_err());
        assert!(decompose_matrix(Mat::<f64>::zeros(0, 4).as_ref(), 1.0, &MrdmdConfig::default()).is_err());
    }

    #[test]
    fn odd_windows_split_floor_half() {
        let x = Mat::from_fn(3, 21, |i, t| ((i * 5 + t * 3) % 7) as f64 + 0.5 * (t as f64 * 1.3).sin());
        let cfg = MrdmdConfig {
            max_level: 3,
            keep_residual: true,
            ..Default::default()
        };
        let tree = decompose_matrix(x.as_ref(), 1.0, &cfg).unwrap();
        if let Some(left) = tree.node(1, 0) {
            assert_eq!((left.start, left.end), (0, 10));
        }
        if let Some(right) = tree.node(1, 1) {
            assert_eq!((right.start, right.end), (10, 21));
        }
        for n in &tree.nodes {
            assert!(n.len() >= MIN_NODE_SNAPSHOTS);
        }
    }
}
