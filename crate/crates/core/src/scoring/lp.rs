//! Softmax linear probe.
//!
//! Features are z-scored with training statistics, then a single linear layer
//! `z = W h + b` is fit by full-batch gradient descent on the mean multinomial
//! cross-entropy plus an L2 penalty on `W`. Parameters start at zero and the
//! iteration order is fixed, so fitting is deterministic.

use serde::{Deserialize, Serialize};

use super::{Backend, ScoreVector, ANOMALY_CLASS};
use crate::error::{Error, Result};
use crate::matrix::{dot, Matrix};

const STD_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LpHyper {
    pub lr: f64,
    pub epochs: usize,
    pub l2: f64,
    pub classes: usize,
}

impl Default for LpHyper {
    fn default() -> Self {
        Self {
            lr: 0.1,
            epochs: 500,
            l2: 1e-4,
            classes: 2,
        }
    }
}

/// Fitted probe. Scoring takes raw features; standardization is applied
/// internally with the stored statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct LpModel {
    /// `classes × dims`
    pub weights: Matrix,
    pub bias: Vec<f64>,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl LpModel {
    /// The untrained model: all weights and biases zero, identity scaling.
    pub fn zeros(classes: usize, dims: usize) -> Self {
        Self {
            weights: Matrix::zeros(classes, dims),
            bias: vec![0.0; classes],
            mean: vec![0.0; dims],
            std: vec![1.0; dims],
        }
    }

    pub fn classes(&self) -> usize {
        self.bias.len()
    }

    pub fn dims(&self) -> usize {
        self.mean.len()
    }

    fn check_dims(&self, features: &Matrix) -> Result<()> {
        if features.cols() != self.dims() {
            return Err(Error::DimensionMismatch {
                expected: self.dims(),
                got: features.cols(),
            });
        }
        Ok(())
    }

    fn standardize_into(&self, x: &[f64], out: &mut [f64]) {
        for (((o, v), m), s) in out.iter_mut().zip(x).zip(&self.mean).zip(&self.std) {
            *o = (v - m) / s;
        }
    }

    /// Class probabilities for one raw feature row.
    pub fn probabilities(&self, x: &[f64]) -> Vec<f64> {
        let mut h = vec![0.0; self.dims()];
        self.standardize_into(x, &mut h);
        let mut p = self.logits_standardized(&h);
        softmax_in_place(&mut p);
        p
    }

    fn logits_standardized(&self, h: &[f64]) -> Vec<f64> {
        let mut z = vec![0.0; self.classes()];
        self.logits_into(h, &mut z);
        z
    }

    fn logits_into(&self, h: &[f64], z: &mut [f64]) {
        for ((zc, w), b) in z.iter_mut().zip(self.weights.iter_rows()).zip(&self.bias) {
            *zc = dot(w, h) + b;
        }
    }

    /// Class probability matrix (`rows × classes`) for raw features.
    pub fn predict_proba(&self, features: &Matrix) -> Result<Matrix> {
        self.check_dims(features)?;
        let k = self.classes();
        let mut out = Matrix::zeros(features.rows(), k);
        for (i, x) in features.iter_rows().enumerate() {
            out.row_mut(i).copy_from_slice(&self.probabilities(x));
        }
        Ok(out)
    }
}

pub fn softmax_in_place(z: &mut [f64]) {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in z.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in z.iter_mut() {
        *v /= sum;
    }
}

pub fn fit_lp(features: &Matrix, labels: &[usize], hyper: &LpHyper) -> Result<LpModel> {
    fit_lp_traced(features, labels, hyper).map(|(m, _)| m)
}

/// Like [`fit_lp`], also returning the penalized training loss before the
/// first step (index 0) and after every epoch.
pub fn fit_lp_traced(features: &Matrix, labels: &[usize], hyper: &LpHyper) -> Result<(LpModel, Vec<f64>)> {
    let n = features.rows();
    let d = features.cols();
    let k = hyper.classes;
    if k < 2 {
        return Err(Error::Fit(format!("need at least 2 classes, got {k}")));
    }
    if d == 0 || n == 0 {
        return Err(Error::Fit("empty training matrix".into()));
    }
    if labels.len() != n {
        return Err(Error::Fit(format!("{} labels for {n} rows", labels.len())));
    }
    if !(hyper.lr > 0.0) || !(hyper.l2 >= 0.0) {
        return Err(Error::Fit("learning rate must be positive and l2 non-negative".into()));
    }
    let mut counts = vec![0usize; k];
    for &y in labels {
        if y >= k {
            return Err(Error::Fit(format!("label {y} outside 0..{k}")));
        }
        counts[y] += 1;
    }
    if let Some(c) = counts.iter().position(|&c| c == 0) {
        return Err(Error::Fit(format!("class {c} absent from training labels")));
    }
    if !features.is_finite() {
        return Err(Error::Fit("non-finite training feature".into()));
    }

    let mean = features.column_means();
    let mut std = vec![0.0; d];
    for r in features.iter_rows() {
        for ((s, v), m) in std.iter_mut().zip(r).zip(&mean) {
            *s += (v - m) * (v - m);
        }
    }
    for s in std.iter_mut() {
        *s = (*s / n as f64).sqrt().max(STD_FLOOR);
    }

    let mut model = LpModel {
        weights: Matrix::zeros(k, d),
        bias: vec![0.0; k],
        mean,
        std,
    };
    let mut h = Matrix::zeros(n, d);
    for (i, x) in features.iter_rows().enumerate() {
        model.standardize_into(x, h.row_mut(i));
    }

    let inv_n = 1.0 / n as f64;
    let mut curve = Vec::with_capacity(hyper.epochs + 1);
    let mut grad_w = Matrix::zeros(k, d);
    let mut grad_b = vec![0.0; k];
    let mut p = vec![0.0; k];
    for epoch in 0..=hyper.epochs {
        grad_w.as_mut_slice().fill(0.0);
        grad_b.fill(0.0);
        let mut loss = 0.0;
        for (row, &y) in h.iter_rows().zip(labels) {
            model.logits_into(row, &mut p);
            softmax_in_place(&mut p);
            loss -= p[y].max(f64::MIN_POSITIVE).ln();
            for (c, pc) in p.iter().enumerate() {
                let g = pc - if c == y { 1.0 } else { 0.0 };
                grad_b[c] += g;
                for (gw, hv) in grad_w.row_mut(c).iter_mut().zip(row) {
                    *gw += g * hv;
                }
            }
        }
        let penalty: f64 = model.weights.as_slice().iter().map(|w| w * w).sum();
        let loss = loss * inv_n + 0.5 * hyper.l2 * penalty;
        if !loss.is_finite() {
            return Err(Error::Numeric(format!("non-finite probe loss at epoch {epoch}")));
        }
        curve.push(loss);
        if epoch == hyper.epochs {
            break;
        }
        for (w, g) in model.weights.as_mut_slice().iter_mut().zip(grad_w.as_slice()) {
            *w -= hyper.lr * (g * inv_n + hyper.l2 * *w);
        }
        for (b, g) in model.bias.iter_mut().zip(&grad_b) {
            *b -= hyper.lr * g * inv_n;
        }
    }
    Ok((model, curve))
}

/// Anomaly-class probability per row.
pub fn score_lp(model: &LpModel, features: &Matrix) -> Result<ScoreVector> {
    model.check_dims(features)?;
    if model.classes() <= ANOMALY_CLASS {
        return Err(Error::Fit("probe has no anomaly class".into()));
    }
    let scores = features
        .iter_rows()
        .map(|x| model.probabilities(x)[ANOMALY_CLASS])
        .collect();
    Ok(ScoreVector {
        scores,
        backend: Backend::Lp,
    })
}

/// Most probable class per row; ties go to the lowest class index.
pub fn lp_predict_class(model: &LpModel, features: &Matrix) -> Result<Vec<usize>> {
    model.check_dims(features)?;
    Ok(features
        .iter_rows()
        .map(|x| {
            let p = model.probabilities(x);
            let mut best = 0;
            for c in 1..p.len() {
                if p[c] > p[best] {
                    best = c;
                }
            }
            best
        })
        .collect())
}
