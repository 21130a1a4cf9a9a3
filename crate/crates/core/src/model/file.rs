//! JSON file formats for mixture models and measurement kernels.
//!
//! Model: `{"n": int, "weights": [float], "components": [{"mean": [float], "covariance": [[float]]}]}`
//! with dense row-major covariances. A single Gaussian is a one-component file.
//!
//! Kernel: `{"rows": int, "cols": int, "data": [[float]]}` row-major.

use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{linalg, GaussianSource, GmmSource};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ComponentRecord {
    pub mean: Vec<f64>,
    pub covariance: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ModelRecord {
    pub n: usize,
    pub weights: Vec<f64>,
    pub components: Vec<ComponentRecord>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct KernelRecord {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<Vec<f64>>,
}

fn rows_to_matrix(rows: &[Vec<f64>], nrows: usize, ncols: usize) -> Option<DMatrix<f64>> {
    if rows.len() != nrows || rows.iter().any(|r| r.len() != ncols) {
        return None;
    }
    Some(DMatrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
}

fn matrix_to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

impl ModelRecord {
    pub fn from_gmm(gmm: &GmmSource) -> Self {
        Self {
            n: gmm.dim(),
            weights: gmm.weights().to_vec(),
            components: gmm
                .components()
                .iter()
                .map(|c| ComponentRecord {
                    mean: c.mean().iter().copied().collect(),
                    covariance: matrix_to_rows(c.covariance()),
                })
                .collect(),
        }
    }

    /// Builds the mixture; covariances are symmetrized by averaging with the transpose.
    pub fn to_gmm(&self) -> std::result::Result<GmmSource, String> {
        let mut components = Vec::with_capacity(self.components.len());
        for (k, c) in self.components.iter().enumerate() {
            if c.mean.len() != self.n {
                return Err(format!("component {k}: mean has length {}, n = {}", c.mean.len(), self.n));
            }
            let cov = rows_to_matrix(&c.covariance, self.n, self.n)
                .ok_or_else(|| format!("component {k}: covariance is not {0}x{0}", self.n))?;
            let cov = linalg::symmetrize(&cov);
            let src = GaussianSource::new(DVector::from_vec(c.mean.clone()), cov)
                .map_err(|e| format!("component {k}: {e}"))?;
            components.push(src);
        }
        GmmSource::new(self.weights.clone(), components).map_err(|e| e.to_string())
    }
}

pub fn load_model(path: &Path) -> Result<GmmSource> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let record: ModelRecord =
        serde_json::from_str(&text).map_err(|e| Error::format(path, e.to_string()))?;
    record.to_gmm().map_err(|reason| Error::format(path, reason))
}

pub fn model_to_string(gmm: &GmmSource) -> String {
    let mut s = serde_json::to_string_pretty(&ModelRecord::from_gmm(gmm))
        .expect("model records always serialize");
    s.push('\n');
    s
}

pub fn save_model(gmm: &GmmSource, path: &Path) -> Result<()> {
    fs::write(path, model_to_string(gmm)).map_err(|e| Error::io(path, e))
}

pub fn load_kernel(path: &Path) -> Result<DMatrix<f64>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let record: KernelRecord =
        serde_json::from_str(&text).map_err(|e| Error::format(path, e.to_string()))?;
    rows_to_matrix(&record.data, record.rows, record.cols).ok_or_else(|| {
        Error::format(
            path,
            format!("data is not {}x{}", record.rows, record.cols),
        )
    })
}

pub fn save_kernel(kernel: &DMatrix<f64>, path: &Path) -> Result<()> {
    let record = KernelRecord {
        rows: kernel.nrows(),
        cols: kernel.ncols(),
        data: matrix_to_rows(kernel),
    };
    let text = serde_json::to_string_pretty(&record).expect("kernel records always serialize");
    fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}
