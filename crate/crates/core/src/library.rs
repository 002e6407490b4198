//! The tailored basis handed to sensor placement.

use std::path::{Path, PathBuf};

use faer::Mat;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{matrix_bytes, read_f64s, read_json, write_atomic, write_json};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColumnPart {
    Real,
    Imaginary,
}

/// Where a library column came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnProvenance {
    pub window: usize,
    pub level: usize,
    pub bin_index: usize,
    /// Node window in days from the start of the full series.
    pub t_start: f64,
    pub t_end: f64,
    pub eigenvalue: [f64; 2],
    pub amplitude: f64,
    pub significant: bool,
    pub part: ColumnPart,
}

/// Real `n × r` matrix of unit-norm mode columns with per-column provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeLibrary {
    basis: Mat<f64>,
    provenance: Vec<ColumnProvenance>,
}

#[derive(Serialize, Deserialize)]
struct LibraryRecord {
    n: usize,
    n_columns: usize,
    basis_file: String,
    provenance: Vec<ColumnProvenance>,
}

impl ModeLibrary {
    pub fn new(basis: Mat<f64>, provenance: Vec<ColumnProvenance>) -> Result<Self> {
        if basis.ncols() != provenance.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} basis columns but {} provenance records",
                basis.ncols(),
                provenance.len()
            )));
        }
        if basis.ncols() == 0 {
            return Err(Error::EmptyLibrary);
        }
        Ok(ModeLibrary { basis, provenance })
    }

    /// A library from raw columns, normalizing each; provenance is synthetic.
    pub fn from_basis(mut basis: Mat<f64>) -> Result<Self> {
        crate::linalg::normalize_columns(&mut basis);
        let provenance = (0..basis.ncols())
            .map(|_| ColumnProvenance {
                window: 0,
                level: 0,
                bin_index: 0,
                t_start: 0.0,
                t_end: 0.0,
                eigenvalue: [1.0, 0.0],
                amplitude: 1.0,
                significant: true,
                part: ColumnPart::Real,
            })
            .collect();
        Self::new(basis, provenance)
    }

    pub fn basis(&self) -> &Mat<f64> {
        &self.basis
    }

    pub fn provenance(&self) -> &[ColumnProvenance] {
        &self.provenance
    }

    pub fn n(&self) -> usize {
        self.basis.nrows()
    }

    pub fn n_columns(&self) -> usize {
        self.basis.ncols()
    }

    pub fn concat(libs: &[ModeLibrary]) -> Result<ModeLibrary> {
        let first = libs.first().ok_or(Error::EmptyLibrary)?;
        let n = first.n();
        if libs.iter().any(|l| l.n() != n) {
            return Err(Error::DimensionMismatch("libraries have different cell counts".into()));
        }
        let cols: Vec<(usize, usize)> = libs
            .iter()
            .enumerate()
            .flat_map(|(l, lib)| (0..lib.n_columns()).map(move |j| (l, j)))
            .collect();
        let basis = Mat::from_fn(n, cols.len(), |i, c| {
            let (l, j) = cols[c];
            libs[l].basis[(i, j)]
        });
        let provenance = libs.iter().flat_map(|l| l.provenance.iter().cloned()).collect();
        ModeLibrary::new(basis, provenance)
    }

    /// Writes `{stem}.json` plus a column-major f64 `{stem}.bin` payload.
    pub fn write(&self, dir: impl AsRef<Path>, stem: &str) -> Result<PathBuf> {
        let dir = dir.as_ref();
        let basis_file = format!("{stem}.bin");
        write_atomic(dir.join(&basis_file), &matrix_bytes(self.basis.as_ref()))?;
        let path = dir.join(format!("{stem}.json"));
        write_json(
            &path,
            &LibraryRecord {
                n: self.n(),
                n_columns: self.n_columns(),
                basis_file,
                provenance: self.provenance.clone(),
            },
        )?;
        Ok(path)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<ModeLibrary> {
        let path = path.as_ref();
        let rec: LibraryRecord = read_json(path)?;
        let dir = path.parent().unwrap_or_else(|| Path::new("."));
        let raw = read_f64s(&dir.join(&rec.basis_file), rec.n * rec.n_columns)?;
        let basis = Mat::from_fn(rec.n, rec.n_columns, |i, j| raw[j * rec.n + i]);
        ModeLibrary::new(basis, rec.provenance)
    }
}
