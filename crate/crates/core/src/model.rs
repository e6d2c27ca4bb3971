//! Hyperparameters, the confidence weighting and the dense factor model.

use std::fs;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Confidence `1 + alpha·r` attached to a count `r`.
#[inline]
pub fn confidence(r: f64, alpha: f64) -> f64 {
    1.0 + alpha * r
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Hyperparams {
    /// Latent dimensionality.
    pub d: usize,
    /// Confidence slope.
    pub alpha: f64,
    /// L2 regularization on every user and item vector.
    pub lambda: f64,
    /// PMI shift; entries are reduced by `ln k`.
    pub k: u32,
    pub n_iterations: usize,
    /// Standard deviation of the Gaussian initialization.
    pub init_scale: f64,
    pub seed: u64,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Self {
            d: 30,
            alpha: 40.0,
            lambda: 0.01,
            k: 1,
            n_iterations: 20,
            init_scale: 0.01,
            seed: 0,
        }
    }
}

impl Hyperparams {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        if self.d == 0 {
            return bad("d must be at least 1".into());
        }
        if !(self.alpha >= 0.0) || !self.alpha.is_finite() {
            return bad(format!("alpha must be finite and >= 0, got {}", self.alpha));
        }
        if !(self.lambda >= 0.0) || !self.lambda.is_finite() {
            return bad(format!(
                "lambda must be finite and >= 0, got {}",
                self.lambda
            ));
        }
        if self.k == 0 {
            return bad("k must be at least 1".into());
        }
        if self.n_iterations == 0 {
            return bad("n_iterations must be at least 1".into());
        }
        // zero is allowed: it yields the all-zero starting point
        if !(self.init_scale >= 0.0) || !self.init_scale.is_finite() {
            return bad(format!(
                "init_scale must be finite and >= 0, got {}",
                self.init_scale
            ));
        }
        Ok(())
    }
}

/// User factors `X` (d×N) and item factors `Y` (d×M), one column per
/// user/item, stored column-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorModel {
    pub x: DMatrix<f64>,
    pub y: DMatrix<f64>,
    pub hyperparams: Hyperparams,
}

impl FactorModel {
    pub fn new(x: DMatrix<f64>, y: DMatrix<f64>, hyperparams: Hyperparams) -> Result<Self> {
        if x.nrows() != y.nrows() || x.nrows() != hyperparams.d {
            return Err(Error::DimensionMismatch(format!(
                "X has {} rows, Y has {} rows, d = {}",
                x.nrows(),
                y.nrows(),
                hyperparams.d
            )));
        }
        Ok(Self { x, y, hyperparams })
    }

    pub fn d(&self) -> usize {
        self.x.nrows()
    }

    pub fn n_users(&self) -> usize {
        self.x.ncols()
    }

    pub fn n_items(&self) -> usize {
        self.y.ncols()
    }

    pub fn user(&self, u: usize) -> &[f64] {
        column(&self.x, u)
    }

    pub fn item(&self, i: usize) -> &[f64] {
        column(&self.y, i)
    }

    /// Predicted preference `x_uᵀ y_i`.
    pub fn score(&self, u: usize, i: usize) -> f64 {
        dot(self.user(u), self.item(i))
    }

    /// Position of the first non-finite entry, if any.
    pub fn first_non_finite(&self) -> Option<(crate::Side, usize)> {
        let d = self.d();
        let find = |m: &DMatrix<f64>| {
            m.as_slice()
                .iter()
                .position(|v| !v.is_finite())
                .map(|p| p / d)
        };
        find(&self.x)
            .map(|u| (crate::Side::User, u))
            .or_else(|| find(&self.y).map(|i| (crate::Side::Item, i)))
    }

    pub fn check_dims(&self, n_users: usize, n_items: usize) -> Result<()> {
        if self.n_users() != n_users || self.n_items() != n_items {
            return Err(Error::DimensionMismatch(format!(
                "model is {}x{}, data is {}x{}",
                self.n_users(),
                self.n_items(),
                n_users,
                n_items
            )));
        }
        Ok(())
    }

    /// Writes `model.json`, `X.bin` and `Y.bin` into `dir`.
    ///
    /// Factor files hold little-endian f64 values in column-major order.
    pub fn save(&self, dir: impl AsRef<Path>, extra: ModelExtra) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let header = ModelHeader {
            format: FORMAT_TAG.to_string(),
            d: self.d(),
            n_users: self.n_users(),
            n_items: self.n_items(),
            x_file: X_FILE.to_string(),
            y_file: Y_FILE.to_string(),
            hyperparams: self.hyperparams,
            extra,
        };
        let header_path = dir.join(HEADER_FILE);
        let json = serde_json::to_string_pretty(&header)?;
        fs::write(&header_path, json + "\n").map_err(|e| Error::io(&header_path, e))?;
        write_f64s(&dir.join(X_FILE), self.x.as_slice())?;
        write_f64s(&dir.join(Y_FILE), self.y.as_slice())?;
        Ok(())
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<(Self, ModelExtra)> {
        let dir = dir.as_ref();
        let header_path = dir.join(HEADER_FILE);
        let text = fs::read_to_string(&header_path).map_err(|e| Error::io(&header_path, e))?;
        let header: ModelHeader = serde_json::from_str(&text)?;
        if header.format != FORMAT_TAG {
            return Err(Error::InvalidParameter(format!(
                "unsupported model format `{}`",
                header.format
            )));
        }
        let xs = read_f64s(&dir.join(&header.x_file), header.d * header.n_users)?;
        let ys = read_f64s(&dir.join(&header.y_file), header.d * header.n_items)?;
        let x = DMatrix::from_vec(header.d, header.n_users, xs);
        let y = DMatrix::from_vec(header.d, header.n_items, ys);
        Ok((Self::new(x, y, header.hyperparams)?, header.extra))
    }
}

const FORMAT_TAG: &str = "cemf-factors-v1";
const HEADER_FILE: &str = "model.json";
const X_FILE: &str = "X.bin";
const Y_FILE: &str = "Y.bin";

/// Training metadata persisted alongside the factors.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelExtra {
    pub mode: String,
    pub loss_trace: Vec<crate::solver::LossBreakdown>,
    pub sweeps: usize,
    pub sppmi_nnz: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct ModelHeader {
    format: String,
    d: usize,
    n_users: usize,
    n_items: usize,
    x_file: String,
    y_file: String,
    hyperparams: Hyperparams,
    extra: ModelExtra,
}

fn write_f64s(path: &Path, values: &[f64]) -> Result<()> {
    let bytes: Vec<u8> = values.iter().flat_map(|v| v.to_le_bytes()).collect();
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn read_f64s(path: &Path, expected: usize) -> Result<Vec<f64>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() != expected * 8 {
        return Err(Error::DimensionMismatch(format!(
            "{}: expected {} values, file holds {} bytes",
            path.display(),
            expected,
            bytes.len()
        )));
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect())
}

#[inline]
pub(crate) fn column(m: &DMatrix<f64>, j: usize) -> &[f64] {
    let d = m.nrows();
    &m.as_slice()[j * d..(j + 1) * d]
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
