//! Multiresolution dynamic mode decomposition (mrDMD) and QR-pivot sensor
//! placement for gridded time series.
//!
//! A series of snapshots ([`grid::SnapshotSeries`]) is split into time scales
//! by [`mrdmd::decompose`]; the slow modes of every window form a
//! [`library::ModeLibrary`]; [`sensors::place_sensors`] picks cells at the
//! column pivots of its transpose; and [`reconstruct::reconstruct_field`]
//! rebuilds full fields from readings at those cells.
//!
//! ```
//! use faer::Mat;
//! use mrsense::grid::GridSpec;
//! use mrsense::mrdmd::{decompose_matrix, LibraryInclude, MrdmdConfig};
//! use mrsense::reconstruct::{evaluate_matrix, reconstruct_field, sensor_readings};
//! use mrsense::sensors::place_sensors;
//!
//! // A steady level plus a wave with a 16-day period, on a 8 × 5 grid.
//! let wave = |i: usize, t: usize| (2.0 * std::f64::consts::PI * t as f64 / 16.0 - 0.3 * i as f64).cos();
//! let x = Mat::from_fn(40, 64, |i, t| 2.0 + wave(i, t));
//! let tree = decompose_matrix(x.as_ref(), 1.0, &MrdmdConfig { max_level: 3, ..Default::default() })?;
//! let library = tree.build_library(0, LibraryInclude::All)?;
//! let grid = GridSpec::full(8, 5, 10.0)?;
//! let sensors = place_sensors(&library, &grid, library.n_columns())?;
//! let y = sensor_readings(x.as_ref(), &sensors.pivots);
//! let rec = reconstruct_field(&library, &sensors, y.as_ref())?;
//! assert!(evaluate_matrix(x.as_ref(), rec.fields.as_ref())?.relative_frobenius < 1e-6);
//! # Ok::<(), mrsense::Error>(())
//! ```
//!
//! The guide in `book/` walks through each stage; its listings run as doctests.

pub mod dmd;
pub mod error;
pub mod grid;
pub mod io;
pub mod library;
mod linalg;
pub mod mrdmd;
pub mod reconstruct;
pub mod sensors;
pub mod synth;

pub use error::{Error, Result};

// The guide's listings are compiled and run with the doctests.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/grids.md")]
    mod grids {}
    #[doc = include_str!("../../../book/src/dmd.md")]
    mod dmd {}
    #[doc = include_str!("../../../book/src/mrdmd.md")]
    mod mrdmd {}
    #[doc = include_str!("../../../book/src/sensors.md")]
    mod sensors {}
    #[doc = include_str!("../../../book/src/reconstruction.md")]
    mod reconstruction {}
    #[doc = include_str!("../../../book/src/synthetic.md")]
    mod synthetic {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
