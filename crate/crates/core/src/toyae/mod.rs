//! Dense reconstruction autoencoder and its element-wise error features.
//!
//! The network maps a 640-dimensional stacked-frame vector through four
//! hidden layers of width `h` to a `latent`-dimensional code and back
//! (five weight layers per side). Hidden layers use a rectifier; the output
//! is linear. Training minimizes mean absolute reconstruction error with
//! AdamW and step decay, keeping the parameters from the epoch with the
//! lowest training loss.

mod optim;
mod synth;

pub use optim::{AdamW, AdamWConfig, StepLr};
pub use synth::{
    default_template, synth_bundle, synth_config_family, BandPerturbation, Regime as FamilyRegime, SynthFamily, SynthSpec,
};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataio::{DatasetBundle, FeatureSet, Label};
use crate::error::{Error, Result};
use crate::matrix::Matrix;

pub const INPUT_DIM: usize = 640;
const LAYERS_PER_SIDE: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AEConfig {
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub latent_dim: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub optimizer: AdamWConfig,
    pub step_lr: StepLr,
    pub seed: u64,
}

impl Default for AEConfig {
    fn default() -> Self {
        Self {
            input_dim: INPUT_DIM,
            hidden_dim: 128,
            latent_dim: 8,
            epochs: 200,
            batch_size: 64,
            optimizer: AdamWConfig::default(),
            step_lr: StepLr::default(),
            seed: 0,
        }
    }
}

impl AEConfig {
    pub fn new(latent_dim: usize, hidden_dim: usize) -> Self {
        Self {
            latent_dim,
            hidden_dim,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be at least 1".into()));
        }
        if !(self.latent_dim > 0 && self.latent_dim < self.hidden_dim && self.hidden_dim < self.input_dim) {
            return Err(Error::Config(format!(
                "need 0 < latent ({}) < hidden ({}) < input ({})",
                self.latent_dim, self.hidden_dim, self.input_dim
            )));
        }
        let o = &self.optimizer;
        let unit_open = |b: f64| b > 0.0 && b < 1.0;
        if !(o.lr > 0.0 && o.eps > 0.0 && o.weight_decay >= 0.0 && unit_open(o.beta1) && unit_open(o.beta2)) {
            return Err(Error::Config("invalid optimizer settings".into()));
        }
        if !(self.step_lr.gamma > 0.0) {
            return Err(Error::Config("step decay factor must be positive".into()));
        }
        Ok(())
    }

    /// Layer widths from input to output, e.g. `[640, h, h, h, h, z, h, h, h, h, 640]`.
    pub fn widths(&self) -> Vec<usize> {
        let mut w = vec![self.input_dim];
        w.extend(std::iter::repeat(self.hidden_dim).take(LAYERS_PER_SIDE - 1));
        w.push(self.latent_dim);
        w.extend(std::iter::repeat(self.hidden_dim).take(LAYERS_PER_SIDE - 1));
        w.push(self.input_dim);
        w
    }

    /// The 3 × 3 grid of (latent, hidden) sizes.
    pub fn grid(base: &AEConfig) -> Vec<AEConfig> {
        let mut out = Vec::with_capacity(9);
        for latent in [4, 8, 16] {
            for hidden in [64, 128, 256] {
                out.push(AEConfig {
                    latent_dim: latent,
                    hidden_dim: hidden,
                    ..base.clone()
                });
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct LayerShape {
    fan_in: usize,
    fan_out: usize,
    /// Offset of the `fan_in × fan_out` weight block; the bias follows it.
    offset: usize,
}

impl LayerShape {
    fn weights(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.fan_in * self.fan_out
    }

    fn bias(&self) -> std::ops::Range<usize> {
        let start = self.offset + self.fan_in * self.fan_out;
        start..start + self.fan_out
    }
}

fn layout(widths: &[usize]) -> (Vec<LayerShape>, usize) {
    let mut offset = 0;
    let layers = widths
        .windows(2)
        .map(|w| {
            let l = LayerShape {
                fan_in: w[0],
                fan_out: w[1],
                offset,
            };
            offset += w[0] * w[1] + w[1];
            l
        })
        .collect();
    (layers, offset)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AEModel {
    config: AEConfig,
    layers: Vec<LayerShape>,
    /// All weights and biases. Weights are stored input-major.
    params: Vec<f32>,
}

impl AEModel {
    /// Uniform fan-in initialization, `U(−1/√fan_in, 1/√fan_in)` for weights and biases.
    pub fn init(config: &AEConfig) -> Result<Self> {
        config.validate()?;
        let (layers, n) = layout(&config.widths());
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut params = vec![0.0f32; n];
        for l in &layers {
            let bound = 1.0 / (l.fan_in as f32).sqrt();
            for p in &mut params[l.offset..l.bias().end] {
                *p = rng.gen_range(-bound..bound);
            }
        }
        Ok(Self {
            config: config.clone(),
            layers,
            params,
        })
    }

    pub fn config(&self) -> &AEConfig {
        &self.config
    }

    pub fn n_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[f32] {
        &self.params
    }

    /// `(fan_in, fan_out)` for each weight layer.
    pub fn layer_shapes(&self) -> Vec<(usize, usize)> {
        self.layers.iter().map(|l| (l.fan_in, l.fan_out)).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.params.iter().all(|p| p.is_finite())
    }

    fn check_width(&self, data: &Matrix) -> Result<()> {
        if data.cols() != self.config.input_dim {
            return Err(Error::DimensionMismatch {
                expected: self.config.input_dim,
                got: data.cols(),
            });
        }
        Ok(())
    }

    /// Runs a batch through every layer, keeping each layer's output.
    fn forward(&self, input: &[f32], batch: usize, acts: &mut Vec<Vec<f32>>) {
        acts.resize_with(self.layers.len(), Vec::new);
        for (li, l) in self.layers.iter().enumerate() {
            let (before, rest) = acts.split_at_mut(li);
            let x: &[f32] = if li == 0 { input } else { &before[li - 1] };
            let out = &mut rest[0];
            out.clear();
            out.resize(batch * l.fan_out, 0.0);
            let w = &self.params[l.weights()];
            let b = &self.params[l.bias()];
            let relu = li + 1 < self.layers.len();
            for (xr, yr) in x.chunks_exact(l.fan_in).zip(out.chunks_exact_mut(l.fan_out)) {
                yr.copy_from_slice(b);
                for (&xk, wk) in xr.iter().zip(w.chunks_exact(l.fan_out)) {
                    if xk != 0.0 {
                        axpy(xk, wk, yr);
                    }
                }
                if relu {
                    for y in yr.iter_mut() {
                        *y = y.max(0.0);
                    }
                }
            }
        }
    }

    /// Reconstructions of every row.
    pub fn reconstruct(&self, data: &Matrix) -> Result<Matrix> {
        self.check_width(data)?;
        let d = self.config.input_dim;
        let mut out = Vec::with_capacity(data.rows() * d);
        let mut acts = Vec::new();
        for chunk in data.as_slice().chunks(d * 256) {
            let batch = chunk.len() / d;
            let x: Vec<f32> = chunk.iter().map(|&v| v as f32).collect();
            self.forward(&x, batch, &mut acts);
            out.extend(acts.last().expect("layers").iter().map(|&v| f64::from(v)));
        }
        Matrix::from_vec(data.rows(), d, out)
    }

    /// Bottleneck codes of every row.
    pub fn encode(&self, data: &Matrix) -> Result<Matrix> {
        self.check_width(data)?;
        let d = self.config.input_dim;
        let z = self.config.latent_dim;
        let mut out = Vec::with_capacity(data.rows() * z);
        let mut acts = Vec::new();
        for chunk in data.as_slice().chunks(d * 256) {
            let batch = chunk.len() / d;
            let x: Vec<f32> = chunk.iter().map(|&v| v as f32).collect();
            self.forward(&x, batch, &mut acts);
            out.extend(acts[LAYERS_PER_SIDE - 1].iter().map(|&v| f64::from(v)));
        }
        Matrix::from_vec(data.rows(), z, out)
    }

    /// Mean absolute reconstruction error over all elements.
    pub fn mae(&self, data: &Matrix) -> Result<f64> {
        let recon = self.reconstruct(data)?;
        crate::metrics::recon_mae(data, &recon)
    }

    /// Accumulates the mean-absolute-error gradient of one batch into `grads`
    /// and returns the batch's summed absolute error.
    fn backward(&self, x: &[f32], batch: usize, acts: &[Vec<f32>], grads: &mut [f32], scale: f32) -> f64 {
        let out = acts.last().expect("layers");
        let mut abs_sum = 0.0f64;
        let mut delta: Vec<f32> = out
            .iter()
            .zip(x)
            .map(|(&y, &t)| {
                let r = y - t;
                abs_sum += f64::from(r.abs());
                if r > 0.0 {
                    scale
                } else if r < 0.0 {
                    -scale
                } else {
                    0.0
                }
            })
            .collect();
        let mut prev_delta = Vec::new();
        for li in (0..self.layers.len()).rev() {
            let l = self.layers[li];
            let input: &[f32] = if li == 0 { x } else { &acts[li - 1] };
            let (gw, gb) = grads[l.offset..l.bias().end].split_at_mut(l.fan_in * l.fan_out);
            for (xr, dr) in input.chunks_exact(l.fan_in).zip(delta.chunks_exact(l.fan_out)) {
                axpy(1.0, dr, gb);
                for (&xk, gk) in xr.iter().zip(gw.chunks_exact_mut(l.fan_out)) {
                    if xk != 0.0 {
                        axpy(xk, dr, gk);
                    }
                }
            }
            if li == 0 {
                break;
            }
            let w = &self.params[l.weights()];
            prev_delta.clear();
            prev_delta.resize(batch * l.fan_in, 0.0);
            for ((xr, dr), pr) in input
                .chunks_exact(l.fan_in)
                .zip(delta.chunks_exact(l.fan_out))
                .zip(prev_delta.chunks_exact_mut(l.fan_in))
            {
                for ((&xk, wk), p) in xr.iter().zip(w.chunks_exact(l.fan_out)).zip(pr.iter_mut()) {
                    // rectifier derivative: the previous activation is zero where clipped
                    if xk > 0.0 {
                        *p = dot(wk, dr);
                    }
                }
            }
            std::mem::swap(&mut delta, &mut prev_delta);
        }
        abs_sum
    }
}

#[inline]
fn axpy(a: f32, x: &[f32], y: &mut [f32]) {
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

#[inline]
fn dot(a: &[f32], b: &[f32]) -> f32 {
    let mut acc = [0.0f32; 8];
    let ca = a.chunks_exact(8);
    let cb = b.chunks_exact(8);
    let tail: f32 = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| x * y).sum();
    for (x, y) in ca.zip(cb) {
        for i in 0..8 {
            acc[i] += x[i] * y[i];
        }
    }
    acc.iter().sum::<f32>() + tail
}

#[derive(Debug, Clone)]
pub struct TrainedAe {
    pub model: AEModel,
    /// Training-set MAE before the first update.
    pub initial_loss: f64,
    /// Training-set MAE after each epoch.
    pub loss_curve: Vec<f64>,
    /// 1-based epoch whose parameters were kept.
    pub best_epoch: usize,
}

impl TrainedAe {
    pub fn best_loss(&self) -> f64 {
        self.loss_curve[self.best_epoch - 1]
    }
}

fn full_mae(model: &AEModel, x: &[f32], rows: usize, acts: &mut Vec<Vec<f32>>) -> f64 {
    let d = model.config.input_dim;
    let mut sum = 0.0f64;
    for chunk in x.chunks(d * 256) {
        let batch = chunk.len() / d;
        model.forward(chunk, batch, acts);
        let out = acts.last().expect("layers");
        sum += out.iter().zip(chunk).map(|(&y, &t)| f64::from((y - t).abs())).sum::<f64>();
    }
    sum / (rows * d) as f64
}

/// Trains on the rows of `train`, returning the lowest-loss snapshot.
pub fn train_ae(config: &AEConfig, train: &Matrix) -> Result<TrainedAe> {
    let mut model = AEModel::init(config)?;
    model.check_width(train)?;
    let rows = train.rows();
    if rows == 0 {
        return Err(Error::Data("no training rows".into()));
    }
    if !train.is_finite() {
        return Err(Error::Data("training data contains non-finite values".into()));
    }
    let d = config.input_dim;
    let x: Vec<f32> = train.as_slice().iter().map(|&v| v as f32).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x5348_5546_464c_4521);
    let mut opt = AdamW::new(config.optimizer, model.params.len());
    let mut grads = vec![0.0f32; model.params.len()];
    let mut acts = Vec::new();
    let mut batch_x: Vec<f32> = Vec::with_capacity(config.batch_size * d);
    let mut order: Vec<usize> = (0..rows).collect();

    let initial_loss = full_mae(&model, &x, rows, &mut acts);
    let mut loss_curve = Vec::with_capacity(config.epochs);
    let mut best = (f64::INFINITY, 0usize, model.params.clone());
    for epoch in 0..config.epochs {
        let lr = config.step_lr.lr_at(config.optimizer.lr, epoch);
        order.shuffle(&mut rng);
        for idx in order.chunks(config.batch_size) {
            batch_x.clear();
            for &r in idx {
                batch_x.extend_from_slice(&x[r * d..(r + 1) * d]);
            }
            let batch = idx.len();
            model.forward(&batch_x, batch, &mut acts);
            grads.iter_mut().for_each(|g| *g = 0.0);
            let scale = 1.0 / (batch * d) as f32;
            model.backward(&batch_x, batch, &acts, &mut grads, scale);
            opt.step(&mut model.params, &grads, lr);
        }
        let loss = full_mae(&model, &x, rows, &mut acts);
        if !loss.is_finite() || !model.is_finite() {
            return Err(Error::Train {
                epoch: epoch + 1,
                reason: "non-finite training loss".into(),
            });
        }
        loss_curve.push(loss);
        if loss < best.0 {
            best = (loss, epoch + 1, model.params.clone());
        }
    }
    model.params = best.2;
    Ok(TrainedAe {
        model,
        initial_loss,
        loss_curve,
        best_epoch: best.1,
    })
}

/// Trains independent configurations in parallel; results keep input order.
pub fn train_grid(configs: &[AEConfig], train: &Matrix) -> Vec<Result<TrainedAe>> {
    configs.par_iter().map(|c| train_ae(c, train)).collect()
}

/// Row `i` is `|x_i − reconstruct(x_i)|`.
pub fn recon_error_features(model: &AEModel, data: &Matrix) -> Result<Matrix> {
    let recon = model.reconstruct(data)?;
    let err = data.as_slice().iter().zip(recon.as_slice()).map(|(a, b)| (a - b).abs()).collect();
    Matrix::from_vec(data.rows(), data.cols(), err)
}

/// The bundle with every feature row replaced by its reconstruction error.
pub fn error_feature_bundle(bundle: &DatasetBundle, model: &AEModel) -> Result<DatasetBundle> {
    let map = |sets: &[FeatureSet]| -> Result<Vec<FeatureSet>> {
        sets.iter()
            .map(|s| {
                let data = recon_error_features(model, &s.data)?;
                FeatureSet::new(&s.machine, s.section, s.split, s.labels.clone(), data)
            })
            .collect()
    };
    DatasetBundle::new(&bundle.machine, map(&bundle.train_sets)?, map(&bundle.test_sets)?)
}

/// Reconstruction MAE over the normal test rows of all sections.
pub fn test_normal_mae(bundle: &DatasetBundle, model: &AEModel) -> Result<f64> {
    let (mut sum, mut count) = (0.0, 0usize);
    for s in &bundle.test_sets {
        let normal: Vec<usize> = (0..s.n_rows()).filter(|&i| s.labels[i] == Label::Normal).collect();
        if normal.is_empty() {
            continue;
        }
        let rows = s.data.select_rows(&normal);
        sum += model.mae(&rows)? * normal.len() as f64;
        count += normal.len();
    }
    if count == 0 {
        return Err(Error::Data("no normal test rows".into()));
    }
    Ok(sum / count as f64)
}
