//! Adam with a cosine-annealed learning rate.

use alloc::vec::Vec;

use crate::math::{cos, sqrt};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { lr: 1e-2, beta1: 0.9, beta2: 0.999, eps: 1e-15 }
    }
}

/// First and second moments for one flat parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub config: AdamConfig,
    m: Vec<f64>,
    v: Vec<f64>,
    step: u64,
}

impl Adam {
    pub fn new(config: AdamConfig, len: usize) -> Self {
        Adam { config, m: alloc::vec![0.0; len], v: alloc::vec![0.0; len], step: 0 }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// One update of `params` with gradient `grads` at learning rate `lr`.
    pub fn update(&mut self, params: &mut [f64], grads: &[f64], lr: f64) {
        assert_eq!(params.len(), self.m.len());
        assert_eq!(grads.len(), self.m.len());
        self.step += 1;
        let AdamConfig { beta1, beta2, eps, .. } = self.config;
        let bc1 = 1.0 - powi(beta1, self.step);
        let bc2 = 1.0 - powi(beta2, self.step);
        let step_size = lr / bc1;
        let inv_bc2 = 1.0 / bc2;
        for i in 0..params.len() {
            let g = grads[i];
            let m = beta1 * self.m[i] + (1.0 - beta1) * g;
            let v = beta2 * self.v[i] + (1.0 - beta2) * g * g;
            self.m[i] = m;
            self.v[i] = v;
            if m != 0.0 {
                params[i] -= step_size * m / (sqrt(v * inv_bc2) + eps);
            }
        }
    }

    /// Sparse variant for hash tables: entries whose gradient is exactly
    /// zero keep their parameters and moments untouched. With dense Adam a
    /// single stray gradient on a rarely visited entry keeps moving it for
    /// dozens of steps through the decaying first moment.
    pub fn update_lazy(&mut self, params: &mut [f64], grads: &[f64], lr: f64) {
        assert_eq!(params.len(), self.m.len());
        assert_eq!(grads.len(), self.m.len());
        self.step += 1;
        let AdamConfig { beta1, beta2, eps, .. } = self.config;
        let step_size = lr / (1.0 - powi(beta1, self.step));
        let inv_bc2 = 1.0 / (1.0 - powi(beta2, self.step));
        for i in 0..params.len() {
            let g = grads[i];
            if g == 0.0 {
                continue;
            }
            let m = beta1 * self.m[i] + (1.0 - beta1) * g;
            let v = beta2 * self.v[i] + (1.0 - beta2) * g * g;
            self.m[i] = m;
            self.v[i] = v;
            params[i] -= step_size * m / (sqrt(v * inv_bc2) + eps);
        }
    }
}

fn powi(x: f64, n: u64) -> f64 {
    let (mut acc, mut base, mut n) = (1.0, x, n);
    while n > 0 {
        if n & 1 == 1 {
            acc *= base;
        }
        base *= base;
        n >>= 1;
    }
    acc
}

/// Cosine annealing from `base` at step 0 to `min` at `total`.
pub fn cosine_lr(base: f64, min: f64, step: u64, total: u64) -> f64 {
    if total == 0 {
        return base;
    }
    let x = (step.min(total)) as f64 / total as f64;
    min + 0.5 * (base - min) * (1.0 + cos(core::f64::consts::PI * x))
}
