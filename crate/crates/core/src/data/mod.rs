//! Datasets, CSV ingestion, normalization, splitting and synthetic generators.

mod normalize;
mod split;
mod synth;

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::scalar::Scalar;

pub use normalize::Normalizer;
pub use split::{split, Split, SplitKind, SplitSpec};
pub use synth::{
    generate, generate_draw, ising_energy, GeneratorKind, GeneratorSpec, RandomPolynomial,
    RclCircuit, Wheatstone,
};

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset<T> {
    pub x: Matrix<T>,
    pub y: Vec<T>,
    pub feature_names: Vec<String>,
    pub target_name: String,
    /// Where the rows came from: a file path or a generator description.
    pub provenance: String,
}

impl<T: Scalar> Dataset<T> {
    pub fn new(
        x: Matrix<T>,
        y: Vec<T>,
        feature_names: Vec<String>,
        target_name: impl Into<String>,
        provenance: impl Into<String>,
    ) -> Result<Self> {
        if x.rows() == 0 {
            return Err(Error::Data("empty dataset".into()));
        }
        if x.cols() == 0 {
            return Err(Error::Data("dataset has no feature columns".into()));
        }
        if y.len() != x.rows() {
            return Err(Error::Shape {
                context: "dataset targets",
                expected: x.rows(),
                actual: y.len(),
            });
        }
        if feature_names.len() != x.cols() {
            return Err(Error::Shape {
                context: "feature names",
                expected: x.cols(),
                actual: feature_names.len(),
            });
        }
        if !x.all_finite() || y.iter().any(|v| !v.is_finite()) {
            return Err(Error::Data("dataset contains non-finite values".into()));
        }
        Ok(Self {
            x,
            y,
            feature_names,
            target_name: target_name.into(),
            provenance: provenance.into(),
        })
    }

    /// Unnamed dataset, features called `x1..xd`.
    pub fn from_xy(x: Matrix<T>, y: Vec<T>) -> Result<Self> {
        let names = (1..=x.cols()).map(|i| format!("x{i}")).collect();
        Self::new(x, y, names, "y", "memory")
    }

    pub fn len(&self) -> usize {
        self.x.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.x.rows() == 0
    }

    pub fn dim(&self) -> usize {
        self.x.cols()
    }

    pub fn subset(&self, idx: &[usize]) -> Self {
        Self {
            x: self.x.select_rows(idx),
            y: idx.iter().map(|&i| self.y[i]).collect(),
            feature_names: self.feature_names.clone(),
            target_name: self.target_name.clone(),
            provenance: self.provenance.clone(),
        }
    }

    pub fn cast<U: Scalar>(&self) -> Dataset<U> {
        let data = self
            .x
            .as_slice()
            .iter()
            .map(|v| U::from_f64_lossy(v.to_f64_exact()))
            .collect();
        Dataset {
            x: Matrix::from_vec(self.x.rows(), self.x.cols(), data).expect("same shape"),
            y: self
                .y
                .iter()
                .map(|v| U::from_f64_lossy(v.to_f64_exact()))
                .collect(),
            feature_names: self.feature_names.clone(),
            target_name: self.target_name.clone(),
            provenance: self.provenance.clone(),
        }
    }

    /// Writes the header row and every sample, target last. Values use the
    /// shortest representation that parses back to the same bits.
    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_csv_string()).map_err(|e| Error::io(path, e))
    }

    pub fn to_csv_string(&self) -> String {
        let mut out = String::new();
        out.push_str(&self.feature_names.join(","));
        out.push(',');
        out.push_str(&self.target_name);
        out.push('\n');
        for (row, y) in self.x.iter_rows().zip(&self.y) {
            for v in row {
                out.push_str(&v.to_f64_exact().to_string());
                out.push(',');
            }
            out.push_str(&y.to_f64_exact().to_string());
            out.push('\n');
        }
        out
    }
}

/// Reads a comma-separated file with a header row. Every column except
/// `target_column` becomes a feature, in file order.
pub fn load_csv<T: Scalar>(path: impl AsRef<Path>, target_column: &str) -> Result<Dataset<T>> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;
    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| csv_error(path, e))?
        .iter()
        .map(str::to_string)
        .collect();
    if headers.iter().all(String::is_empty) {
        return Err(Error::Data(format!("{}: empty dataset", path.display())));
    }
    let target_idx = headers
        .iter()
        .position(|h| h == target_column)
        .ok_or_else(|| {
            Error::Data(format!(
                "{}: target column '{target_column}' not found (columns: {})",
                path.display(),
                headers.join(", ")
            ))
        })?;
    if headers.len() < 2 {
        return Err(Error::Data(format!(
            "{}: no feature columns",
            path.display()
        )));
    }

    let d = headers.len() - 1;
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (r, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        // Header is line 1.
        let line = r + 2;
        if rec.len() != headers.len() {
            return Err(Error::Parse {
                path: path.into(),
                row: line,
                column: rec.len().min(headers.len()) + 1,
                message: format!("expected {} fields, found {}", headers.len(), rec.len()),
            });
        }
        for (c, cell) in rec.iter().enumerate() {
            let v: f64 = cell.parse().map_err(|_| Error::Parse {
                path: path.into(),
                row: line,
                column: c + 1,
                message: format!("non-numeric value '{cell}' in column '{}'", headers[c]),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    path: path.into(),
                    row: line,
                    column: c + 1,
                    message: format!("non-finite value '{cell}'"),
                });
            }
            if c == target_idx {
                ys.push(T::from_f64_lossy(v));
            } else {
                xs.push(T::from_f64_lossy(v));
            }
        }
    }
    if ys.is_empty() {
        return Err(Error::Data(format!("{}: empty dataset", path.display())));
    }
    let names = headers
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != target_idx)
        .map(|(_, h)| h.clone())
        .collect();
    Dataset::new(
        Matrix::from_vec(ys.len(), d, xs)?,
        ys,
        names,
        target_column,
        path.display().to_string(),
    )
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    let (row, column) = e.position().map_or((0, 0), |p| (p.line() as usize, 0));
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Parse {
            path: path.into(),
            row,
            column,
            message: format!("{other:?}"),
        },
    }
}

/// Generator parameters written next to a generated CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    pub generator: GeneratorSpec,
    pub rows: usize,
    pub features: Vec<String>,
    pub target: String,
}

#[cfg(test)]
mod tests;
