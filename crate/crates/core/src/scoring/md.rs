//! Squared Mahalanobis distance from one global normal-data Gaussian.
//!
//! The covariance is the unbiased sample covariance of all normal training
//! rows pooled across sections, regularized as `Σ + εI` before inversion.
//! With `Regularization::Auto`, `ε = max(1e-6, 1e-3 · tr(Σ) / d)`. If the
//! Cholesky factorization still fails, `ε` is doubled up to ten times.

use super::linalg::{cholesky, cholesky_inverse};
use super::{Backend, ScoreVector};
use crate::error::{Error, Result};
use crate::matrix::{dot, Matrix};

const MAX_REG_RETRIES: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum Regularization {
    #[default]
    Auto,
    Fixed(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct MdModel {
    pub mean: Vec<f64>,
    /// Regularized inverse covariance, symmetric.
    pub precision: Matrix,
    /// The `ε` that was actually added to the covariance diagonal.
    pub reg_epsilon: f64,
}

impl MdModel {
    pub fn dims(&self) -> usize {
        self.mean.len()
    }

    /// Squared distance of a single row.
    pub fn distance(&self, x: &[f64]) -> f64 {
        let diff: Vec<f64> = x.iter().zip(&self.mean).map(|(a, b)| a - b).collect();
        let q: f64 = self
            .precision
            .iter_rows()
            .zip(&diff)
            .map(|(row, di)| di * dot(row, &diff))
            .sum();
        q.max(0.0)
    }
}

/// Unbiased sample covariance (two-pass, centered).
pub fn sample_covariance(data: &Matrix, mean: &[f64]) -> Matrix {
    let d = data.cols();
    let mut cov = Matrix::zeros(d, d);
    let mut centered = vec![0.0; d];
    for r in data.iter_rows() {
        for ((c, v), m) in centered.iter_mut().zip(r).zip(mean) {
            *c = v - m;
        }
        for i in 0..d {
            let ci = centered[i];
            if ci == 0.0 {
                continue;
            }
            let row = &mut cov.row_mut(i)[..=i];
            for (slot, cj) in row.iter_mut().zip(&centered) {
                *slot += ci * cj;
            }
        }
    }
    let scale = 1.0 / (data.rows() as f64 - 1.0);
    for i in 0..d {
        for j in 0..=i {
            let v = cov[(i, j)] * scale;
            cov[(i, j)] = v;
            cov[(j, i)] = v;
        }
    }
    cov
}

pub fn auto_epsilon(cov: &Matrix) -> f64 {
    let d = cov.rows();
    let trace: f64 = (0..d).map(|i| cov[(i, i)]).sum();
    (1e-3 * trace / d as f64).max(1e-6)
}

pub fn fit_md(normal_train: &Matrix, reg: Regularization) -> Result<MdModel> {
    let n = normal_train.rows();
    let d = normal_train.cols();
    if n < 2 {
        return Err(Error::Fit(format!("need at least 2 normal rows, got {n}")));
    }
    if d == 0 {
        return Err(Error::Fit("zero-dimensional features".into()));
    }
    if !normal_train.is_finite() {
        return Err(Error::Fit("non-finite training feature".into()));
    }
    let mean = normal_train.column_means();
    let cov = sample_covariance(normal_train, &mean);
    let mut eps = match reg {
        Regularization::Auto => auto_epsilon(&cov),
        Regularization::Fixed(e) if e >= 0.0 && e.is_finite() => e,
        Regularization::Fixed(e) => return Err(Error::Fit(format!("invalid regularization {e}"))),
    };
    for attempt in 0..=MAX_REG_RETRIES {
        let mut reg_cov = cov.clone();
        for i in 0..d {
            reg_cov[(i, i)] += eps;
        }
        if let Some(l) = cholesky(&reg_cov) {
            let precision = cholesky_inverse(&l);
            if precision.is_finite() {
                return Ok(MdModel {
                    mean,
                    precision,
                    reg_epsilon: eps,
                });
            }
        }
        if attempt < MAX_REG_RETRIES {
            eps = if eps > 0.0 { eps * 2.0 } else { 1e-6 };
        }
    }
    Err(Error::Numeric(format!(
        "covariance not invertible after {MAX_REG_RETRIES} regularization retries (last ε = {eps:e})"
    )))
}

pub fn score_md(model: &MdModel, features: &Matrix) -> Result<ScoreVector> {
    if features.cols() != model.dims() {
        return Err(Error::DimensionMismatch {
            expected: model.dims(),
            got: features.cols(),
        });
    }
    Ok(ScoreVector {
        scores: features.iter_rows().map(|x| model.distance(x)).collect(),
        backend: Backend::Md,
    })
}
