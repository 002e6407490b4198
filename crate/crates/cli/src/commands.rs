use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use mrsense::dmd::{compute_dmd, RankPolicy};
use mrsense::grid::{coarsen, SnapshotSeries};
use mrsense::io::{load_snapshots, read_json, write_atomic, write_json, write_snapshots, Dtype};
use mrsense::mrdmd::{AmplitudeFit, Decomposition, LibraryInclude, MrdmdConfig};
use mrsense::reconstruct::{evaluate, random_baseline, reconstruct_field, sensor_readings};
use mrsense::sensors::{compare_with_monitors, place_sensors, place_sensors_separate, read_monitors, region_fraction, SensorSet};
use mrsense::synth::{generate, write_generated, SynthSpec};
use mrsense::Error;

use crate::config::{self, RunConfig};
use crate::{CliError, Globals};

pub const RUN_CONFIG: &str = "run_config.json";

type CmdResult = Result<(), CliError>;

fn write_run_config<T: Serialize>(path: &Path, subcommand: &str, g: &Globals, args: &T) -> CmdResult {
    let rc = RunConfig {
        subcommand,
        version: env!("CARGO_PKG_VERSION"),
        seed: g.seed,
        threads: g.threads,
        args,
    };
    Ok(write_json(path, &rc)?)
}

/// `sensors.csv` → `sensors.<suffix>`
fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!("{stem}.{suffix}"))
}

fn ensure_dir(dir: &Path) -> CmdResult {
    std::fs::create_dir_all(dir).map_err(|e| Error::Io {
        path: dir.to_path_buf(),
        source: e,
    })?;
    Ok(())
}

fn ensure_parent(path: &Path) -> CmdResult {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => ensure_dir(p),
        _ => Ok(()),
    }
}

fn emit(v: &Value) -> CmdResult {
    println!("{}", serde_json::to_string_pretty(v).expect("serializable summary"));
    Ok(())
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MergeArg {
    /// Concatenate window libraries and pivot once.
    Merged,
    /// Pivot each window's library and take the union of the pivots.
    Separate,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IncludeArg {
    /// Every retained slow mode.
    All,
    /// Only modes flagged significant.
    Significant,
}

impl From<IncludeArg> for LibraryInclude {
    fn from(i: IncludeArg) -> Self {
        match i {
            IncludeArg::All => LibraryInclude::All,
            IncludeArg::Significant => LibraryInclude::SignificantOnly,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitArg {
    /// Refit slow-mode amplitudes using the slow modes alone.
    Slow,
    /// Keep amplitudes from the fit over all of a node's modes.
    All,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct InputArgs {
    /// Snapshot header, its directory, or a CSV file.
    #[arg(long = "in", value_name = "PATH")]
    #[serde(rename = "in")]
    pub input: PathBuf,
    /// Block-average the grid by this factor before processing.
    #[arg(long, default_value_t = 1, value_name = "FACTOR")]
    pub coarsen: usize,
}

impl InputArgs {
    fn load(&self) -> Result<SnapshotSeries, CliError> {
        let s = load_snapshots(&self.input)?;
        Ok(coarsen(&s, self.coarsen)?)
    }
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct RankArgs {
    /// Keep the leading singular values holding this fraction of the energy.
    #[arg(long, default_value_t = 0.99)]
    pub energy: f64,
    /// Fixed truncation rank; takes precedence over --energy.
    #[arg(long)]
    pub rank: Option<usize>,
    /// Upper bound on the energy-selected rank.
    #[arg(long)]
    pub max_rank: Option<usize>,
}

impl RankArgs {
    fn policy(&self) -> RankPolicy {
        match self.rank {
            Some(rank) => RankPolicy::Fixed { rank },
            None => RankPolicy::Energy {
                fraction: self.energy,
                max_rank: self.max_rank,
            },
        }
    }
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct SynthArgs {
    /// Synthetic field specification (JSON).
    #[arg(long, value_name = "FILE")]
    pub spec: PathBuf,
    /// Output directory for the series and truth.json.
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
}

pub fn synth(a: SynthArgs, g: &Globals) -> CmdResult {
    let a = config::apply(a, &g.overrides)?;
    let mut spec: SynthSpec = read_json(&a.spec)?;
    if let Some(seed) = g.seed {
        spec.seed = seed;
    }
    let (series, truth) = generate(&spec)?;
    write_generated(&series, &truth, &a.out)?;
    write_run_config(&a.out.join(RUN_CONFIG), "synth", g, &a)?;
    emit(&json!({
        "cells": series.n_cells(),
        "snapshots": series.n_snapshots(),
        "events": truth.events.len(),
        "seed": spec.seed,
    }))
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct DmdArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub rank: RankArgs,
    /// First snapshot of the analysed window.
    #[arg(long, default_value_t = 0)]
    pub window_start: usize,
    /// Window length in snapshots (default: to the end of the series).
    #[arg(long)]
    pub window_len: Option<usize>,
    /// Output directory.
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
}

pub fn dmd(a: DmdArgs, g: &Globals) -> CmdResult {
    let a = config::apply(a, &g.overrides)?;
    let series = a.input.load()?;
    let len = a
        .window_len
        .unwrap_or_else(|| series.n_snapshots().saturating_sub(a.window_start));
    let w = series.window(a.window_start, len)?;
    let d = compute_dmd(w.values().as_ref(), w.dt_days() as f64, &a.rank.policy())?;
    ensure_dir(&a.out)?;
    d.write(&a.out, "dmd")?;
    write_json(a.out.join("grid.json"), w.grid())?;
    write_run_config(&a.out.join(RUN_CONFIG), "dmd", g, &a)?;
    emit(&json!({ "rank": d.rank(), "cells": d.n(), "snapshots": w.n_snapshots() }))
}

fn default_levels() -> usize {
    13
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct MrdmdArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub rank: RankArgs,
    /// Number of levels including the root (the deepest level is LEVELS − 1).
    #[arg(long, default_value_t = default_levels())]
    pub levels: usize,
    /// Maximum cycles per window for a mode to count as slow.
    #[arg(long, default_value_t = 1.0)]
    pub rho: f64,
    /// Significance tolerance relative to the background contribution.
    #[arg(long, default_value_t = 1e-2)]
    pub tol: f64,
    /// Window length in snapshots; clipped to the series for a single window.
    #[arg(long, default_value_t = 4096)]
    pub window_len: usize,
    /// Decompose the first and the last WINDOW_LEN snapshots separately.
    #[arg(long, default_value_t = false)]
    pub two_window: bool,
    /// How slow-mode amplitudes are fitted at each node.
    #[arg(long, value_enum, default_value_t = FitArg::Slow)]
    pub amplitude_fit: FitArg,
    /// Output directory.
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
}

pub fn mrdmd(a: MrdmdArgs, g: &Globals) -> CmdResult {
    let a = config::apply(a, &g.overrides)?;
    if a.levels == 0 {
        return Err(Error::InvalidArgument("--levels must be at least 1".into()).into());
    }
    let series = a.input.load()?;
    let cfg = MrdmdConfig {
        max_level: a.levels - 1,
        rho: a.rho,
        tolerance: a.tol,
        rank_policy: a.rank.policy(),
        amplitude_fit: match a.amplitude_fit {
            FitArg::Slow => AmplitudeFit::Slow,
            FitArg::All => AmplitudeFit::All,
        },
        keep_residual: false,
    };
    let decomposition = Decomposition::run(&series, &cfg, Some(a.window_len), a.two_window)?;
    ensure_dir(&a.out)?;
    decomposition.write(&a.out)?;
    let library = decomposition.merged_library(LibraryInclude::All)?;
    library.write(&a.out, "library")?;
    write_run_config(&a.out.join(RUN_CONFIG), "mrdmd", g, &a)?;
    let windows: Vec<Value> = decomposition
        .windows
        .iter()
        .map(|t| {
            json!({
                "offset": t.window_offset,
                "snapshots": t.n_snapshots,
                "nodes": t.nodes.len(),
                "depth": t.depth(),
                "significant_modes": t.count_significant_modes().total,
            })
        })
        .collect();
    emit(&json!({ "windows": windows, "library_columns": library.n_columns() }))
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct PlaceArgs {
    /// Directory written by `mrdmd`.
    #[arg(long, value_name = "DIR")]
    pub library: PathBuf,
    /// Sensor CSV to write.
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
    /// Number of sensors (default: one per library column).
    #[arg(long)]
    pub count: Option<usize>,
    /// How two-window libraries are combined before pivoting.
    #[arg(long, value_enum, default_value_t = MergeArg::Merged)]
    pub merge: MergeArg,
    /// Which modes enter the library.
    #[arg(long, value_enum, default_value_t = IncludeArg::All)]
    pub include: IncludeArg,
    /// Monitor locations (CSV with lat and lon columns) to compare against.
    #[arg(long, value_name = "FILE")]
    pub compare: Option<PathBuf>,
    /// Longitude splitting west from east in placement statistics.
    #[arg(long, default_value_t = -100.0, allow_hyphen_values = true)]
    pub meridian: f64,
}

pub fn place(a: PlaceArgs, g: &Globals) -> CmdResult {
    let a = config::apply(a, &g.overrides)?;
    let d = Decomposition::read(&a.library)?;
    let libraries = d.libraries(a.include.into())?;
    let columns: usize = libraries.iter().map(|l| l.n_columns()).sum();
    let sensors = match a.merge {
        MergeArg::Merged => {
            let lib = mrsense::library::ModeLibrary::concat(&libraries)?;
            place_sensors(&lib, &d.grid, a.count.unwrap_or(columns))?
        }
        MergeArg::Separate => {
            if a.count.is_some() {
                return Err(CliError::config("--count applies only to --merge merged"));
            }
            place_sensors_separate(&libraries, &d.grid)?
        }
    };
    ensure_parent(&a.out)?;
    sensors.write_csv(&a.out)?;
    write_run_config(&sibling(&a.out, RUN_CONFIG), "place", g, &a)?;
    let west = region_fraction(&sensors, a.meridian).ok();
    let mut summary = json!({
        "sensors": sensors.len(),
        "library_columns": columns,
        "fraction_west": west,
    });
    if let Some(path) = &a.compare {
        let monitors = read_monitors(path)?;
        let cmp = compare_with_monitors(&sensors, &d.grid, &monitors, a.meridian)?;
        write_json(sibling(&a.out, "comparison.json"), &cmp)?;
        summary["comparison"] = serde_json::to_value(&cmp).expect("serializable");
    }
    emit(&summary)
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct ReconstructArgs {
    /// Directory written by `mrdmd`.
    #[arg(long, value_name = "DIR")]
    pub library: PathBuf,
    /// Sensor CSV written by `place`.
    #[arg(long, value_name = "FILE")]
    pub sensors: PathBuf,
    /// Ground-truth series; sensor readings are taken from it.
    #[command(flatten)]
    #[serde(flatten)]
    pub input: InputArgs,
    #[arg(long, default_value_t = 0)]
    pub window_start: usize,
    #[arg(long)]
    pub window_len: Option<usize>,
    #[arg(long, value_enum, default_value_t = IncludeArg::All)]
    pub include: IncludeArg,
    /// Also score random sensor sets of the same size: `random:k=30,seed=S`.
    #[arg(long, value_name = "SPEC")]
    pub baseline: Option<String>,
    /// Write the reconstructed fields here in the snapshot format.
    #[arg(long, value_name = "DIR")]
    pub fields_out: Option<PathBuf>,
    /// Report JSON to write.
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
}

/// Parses `random:k=30,seed=7`; `k` defaults to 30 and `seed` to the global seed or 0.
fn parse_baseline(spec: &str, default_seed: u64) -> Result<(usize, u64), CliError> {
    let bad = || CliError::config(format!("baseline {spec:?}: expected random:k=K,seed=S"));
    let rest = spec.strip_prefix("random").ok_or_else(bad)?;
    let (mut k, mut seed) = (30, default_seed);
    let rest = rest.strip_prefix(':').unwrap_or(rest);
    for part in rest.split(',').filter(|p| !p.is_empty()) {
        let (key, value) = part.split_once('=').ok_or_else(bad)?;
        match key.trim() {
            "k" => k = value.trim().parse().map_err(|_| bad())?,
            "seed" => seed = value.trim().parse().map_err(|_| bad())?,
            _ => return Err(bad()),
        }
    }
    Ok((k, seed))
}

pub fn reconstruct(a: ReconstructArgs, g: &Globals) -> CmdResult {
    let a = config::apply(a, &g.overrides)?;
    let baseline = a
        .baseline
        .as_deref()
        .map(|s| parse_baseline(s, g.seed.unwrap_or(0)))
        .transpose()?;
    let d = Decomposition::read(&a.library)?;
    let library = d.merged_library(a.include.into())?;
    let series = a.input.load()?;
    if series.grid() != &d.grid {
        return Err(Error::DimensionMismatch("series grid differs from the decomposition grid".into()).into());
    }
    let len = a
        .window_len
        .unwrap_or_else(|| series.n_snapshots().saturating_sub(a.window_start));
    let truth = series.window(a.window_start, len)?;
    let sensors = SensorSet::read_csv(&a.sensors, &d.grid)?;
    let y = sensor_readings(truth.values().as_ref(), &sensors.pivots);
    let rec = reconstruct_field(&library, &sensors, y.as_ref())?;
    let report = evaluate(&truth, rec.fields.as_ref())?.with_condition(rec.condition_number);
    let baseline = baseline
        .map(|(k, seed)| random_baseline(&library, truth.values().as_ref(), &sensors.pivots, k, seed))
        .transpose()?;
    if let Some(dir) = &a.fields_out {
        let fields = SnapshotSeries::new(truth.grid().clone(), rec.fields.clone(), truth.start_date(), truth.dt_days())?;
        write_snapshots(&fields, dir, Dtype::F64)?;
    }
    let out = json!({
        "sensors": sensors.len(),
        "library_columns": library.n_columns(),
        "solve_rank": rec.rank,
        "snapshots": truth.n_snapshots(),
        "reconstruction": report,
        "baseline": baseline,
    });
    ensure_parent(&a.out)?;
    write_json(&a.out, &out)?;
    write_run_config(&sibling(&a.out, RUN_CONFIG), "reconstruct", g, &a)?;
    emit(&json!({
        "relative_frobenius": out["reconstruction"]["relative_frobenius"],
        "condition_number": out["reconstruction"]["condition_number"],
        "baseline_median": out["baseline"].get("random_median"),
    }))
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct ReportArgs {
    /// Directory written by `mrdmd`.
    #[arg(long, value_name = "DIR")]
    pub tree: PathBuf,
    /// Write the time–frequency map CSV here (a second window goes to `<stem>.w1.csv`).
    #[arg(long, value_name = "FILE")]
    pub time_frequency_map: Option<PathBuf>,
    /// Sensor CSV to summarize.
    #[arg(long, value_name = "FILE")]
    pub sensors: Option<PathBuf>,
    /// Longitude splitting west from east.
    #[arg(long, default_value_t = -100.0, allow_hyphen_values = true)]
    pub meridian: f64,
    /// Input series, for data means over each window.
    #[arg(long = "in", value_name = "PATH")]
    #[serde(rename = "in")]
    pub input: Option<PathBuf>,
    /// Coarsening factor used when the tree was built.
    #[arg(long, default_value_t = 1, value_name = "FACTOR")]
    pub coarsen: usize,
    /// Report JSON to write (default: standard output only).
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
}

fn time_frequency_csv(tree: &mrsense::mrdmd::MrdmdTree) -> Result<Vec<u8>, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| CliError::from(Error::from(e));
    w.write_record(["level", "bin", "t_start", "t_end", "n_significant"])
        .map_err(csv_err)?;
    for row in tree.time_frequency_map() {
        w.write_record([
            row.level.to_string(),
            row.bin.to_string(),
            row.t_start.to_string(),
            row.t_end.to_string(),
            row.n_significant.to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.into_inner()
        .map_err(|e| Error::Format(format!("csv flush: {e}")).into())
}

pub fn report(a: ReportArgs, g: &Globals) -> CmdResult {
    let a = config::apply(a, &g.overrides)?;
    let d = Decomposition::read(&a.tree)?;
    let series = match &a.input {
        Some(p) => Some(coarsen(&load_snapshots(p)?, a.coarsen)?),
        None => None,
    };
    let mut windows = Vec::new();
    for (w, tree) in d.windows.iter().enumerate() {
        let counts = tree.count_significant_modes();
        let background = tree.root().reconstruct();
        let background_mean = background.sum() / (background.nrows() * background.ncols()).max(1) as f64;
        let data_mean = match &series {
            Some(s) => Some(s.window(tree.window_offset, tree.n_snapshots)?.mean()),
            None => None,
        };
        let significant_columns = match tree.build_library(w, LibraryInclude::SignificantOnly) {
            Ok(l) => l.n_columns(),
            Err(Error::EmptyLibrary) => 0,
            Err(e) => return Err(e.into()),
        };
        windows.push(json!({
            "window": w,
            "start_date": tree.date_at(0).to_string(),
            "end_date": tree.date_at(tree.n_snapshots.saturating_sub(1)).to_string(),
            "snapshots": tree.n_snapshots,
            "nodes": tree.nodes.len(),
            "depth": tree.depth(),
            "significant_modes": counts.total,
            "significant_by_level": counts.by_level,
            "background_norm": tree.background_norm,
            "background_mode_mean": background_mean,
            "data_mean": data_mean,
            "library_columns": tree.build_library(w, LibraryInclude::All).map(|l| l.n_columns()).unwrap_or(0),
            "significant_library_columns": significant_columns,
        }));
        if let Some(path) = &a.time_frequency_map {
            let path = if w == 0 { path.clone() } else { sibling(path, &format!("w{w}.csv")) };
            ensure_parent(&path)?;
            write_atomic(&path, &time_frequency_csv(tree)?)?;
        }
    }
    let merged = d.merged_library(LibraryInclude::All).map(|l| l.n_columns()).unwrap_or(0);
    let mut out = json!({ "windows": windows, "library_columns": merged });
    if let Some(path) = &a.sensors {
        let sensors = SensorSet::read_csv(path, &d.grid)?;
        out["sensors"] = json!({
            "count": sensors.len(),
            "meridian": a.meridian,
            "fraction_west": region_fraction(&sensors, a.meridian).ok(),
        });
    }
    if let Some(path) = &a.out {
        ensure_parent(path)?;
        write_json(path, &out)?;
        write_run_config(&sibling(path, RUN_CONFIG), "report", g, &a)?;
    }
    emit(&out)
}
