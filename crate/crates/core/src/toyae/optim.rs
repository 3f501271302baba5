//! Adaptive moment estimation with decoupled weight decay, and step decay.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamWConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 1e-2,
        }
    }
}

/// Multiplies the learning rate by `gamma` every `period` epochs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepLr {
    pub period: usize,
    pub gamma: f64,
}

impl Default for StepLr {
    fn default() -> Self {
        Self { period: 80, gamma: 0.1 }
    }
}

impl StepLr {
    /// Learning rate for a 0-based epoch index.
    pub fn lr_at(&self, base: f64, epoch: usize) -> f64 {
        let steps = epoch.checked_div(self.period).unwrap_or(0);
        base * self.gamma.powi(steps as i32)
    }
}

/// Moment buffers for one flat parameter slice.
#[derive(Debug, Clone)]
pub struct AdamW {
    cfg: AdamWConfig,
    m: Vec<f32>,
    v: Vec<f32>,
    t: i32,
}

impl AdamW {
    pub fn new(cfg: AdamWConfig, n_params: usize) -> Self {
        Self {
            cfg,
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
            t: 0,
        }
    }

    pub fn steps(&self) -> i32 {
        self.t
    }

    /// One update of `params` from `grads` at learning rate `lr`.
    ///
    /// ```text
    /// p ← p·(1 − lr·wd)
    /// m ← β₁m + (1−β₁)g        v ← β₂v + (1−β₂)g²
    /// p ← p − lr · m̂ / (√v̂ + ε)
    /// ```
    pub fn step(&mut self, params: &mut [f32], grads: &[f32], lr: f64) {
        assert_eq!(params.len(), self.m.len());
        assert_eq!(grads.len(), self.m.len());
        self.t += 1;
        let c = &self.cfg;
        let bc1 = 1.0 - c.beta1.powi(self.t);
        let bc2 = 1.0 - c.beta2.powi(self.t);
        let decay = (1.0 - lr * c.weight_decay) as f32;
        let step = (lr / bc1) as f32;
        let inv_bc2 = (1.0 / bc2) as f32;
        let (b1, b2) = (c.beta1 as f32, c.beta2 as f32);
        let eps = c.eps as f32;
        for (((p, &g), m), v) in params.iter_mut().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            *p *= decay;
            *m = b1 * *m + (1.0 - b1) * g;
            *v = b2 * *v + (1.0 - b2) * g * g;
            *p -= step * *m / ((*v * inv_bc2).sqrt() + eps);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn step_lr_schedule() {
        let s = StepLr::default();
        assert_eq!(s.lr_at(1e-3, 0), 1e-3);
        assert_eq!(s.lr_at(1e-3, 79), 1e-3);
        assert!((s.lr_at(1e-3, 80) - 1e-4).abs() < 1e-18);
        assert!((s.lr_at(1e-3, 199) - 1e-5).abs() < 1e-18);
    }

    #[test]
    fn first_step_moves_by_lr() {
        // bias-corrected first step is lr·g/(|g|+ε) ≈ lr·sign(g)
        let mut opt = AdamW::new(
            AdamWConfig {
                weight_decay: 0.0,
                ..Default::default()
            },
            2,
        );
        let mut p = [1.0f32, -1.0];
        opt.step(&mut p, &[0.5, -2.0], 1e-3);
        assert!((p[0] - (1.0 - 1e-3)).abs() < 1e-6);
        assert!((p[1] - (-1.0 + 1e-3)).abs() < 1e-6);
    }

    #[test]
    fn decay_is_decoupled_from_gradient() {
        let mut opt = AdamW::new(AdamWConfig::default(), 1);
        let mut p = [2.0f32];
        opt.step(&mut p, &[0.0], 0.1);
        assert!((p[0] - 2.0 * (1.0 - 0.1 * 1e-2)).abs() < 1e-6);
    }

    #[test]
    fn minimizes_a_quadratic() {
        let mut opt = AdamW::new(
            AdamWConfig {
                weight_decay: 0.0,
                ..Default::default()
            },
            1,
        );
        let mut p = [3.0f32];
        for _ in 0..5000 {
            let g = [2.0 * (p[0] - 1.0)];
            opt.step(&mut p, &g, 1e-2);
        }
        assert!((p[0] - 1.0).abs() < 1e-2);
    }
}
