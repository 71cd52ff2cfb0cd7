use serde::{Deserialize, Serialize};

use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Schedule {
    #[default]
    Cosine,
    Constant,
}

impl Schedule {
    /// Learning rate at `step` of `total` (cosine decays to zero at `total`).
    pub fn rate(self, base: f64, step: usize, total: usize) -> f64 {
        match self {
            Self::Constant => base,
            Self::Cosine => {
                let t = if total == 0 { 0.0 } else { (step as f64 / total as f64).min(1.0) };
                0.5 * base * (1.0 + (std::f64::consts::PI * t).cos())
            }
        }
    }
}

/// Adam with decoupled weight decay.
#[derive(Debug, Clone)]
pub struct AdamW {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    step: u64,
    m: Vec<Vec<f32>>,
    v: Vec<Vec<f32>>,
}

impl AdamW {
    pub fn new(sizes: impl IntoIterator<Item = usize>, weight_decay: f64) -> Self {
        let (m, v): (Vec<_>, Vec<_>) = sizes.into_iter().map(|n| (vec![0.0; n], vec![0.0; n])).unzip();
        Self { beta1: 0.9, beta2: 0.999, eps: 1e-8, weight_decay, step: 0, m, v }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// Applies one update. `grads[k] == None` leaves parameter `k` untouched;
    /// `decay[k]` selects decoupled weight decay.
    pub fn update(&mut self, params: &mut [Tensor<f32>], grads: &[Option<Tensor<f32>>], decay: &[bool], lr: f64) {
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        let (b1, b2) = (self.beta1 as f32, self.beta2 as f32);
        let step = (lr / c1) as f32;
        let inv_c2 = (1.0 / c2) as f32;
        let eps = self.eps as f32;
        for (k, p) in params.iter_mut().enumerate() {
            let Some(g) = &grads[k] else { continue };
            if decay[k] && self.weight_decay > 0.0 {
                let shrink = (1.0 - lr * self.weight_decay) as f32;
                p.data_mut().iter_mut().for_each(|w| *w *= shrink);
            }
            let (m, v) = (&mut self.m[k], &mut self.v[k]);
            for (((w, g), m), v) in p.data_mut().iter_mut().zip(g.data()).zip(m.iter_mut()).zip(v.iter_mut()) {
                *m = b1 * *m + (1.0 - b1) * g;
                *v = b2 * *v + (1.0 - b2) * g * g;
                *w -= step * *m / ((*v * inv_c2).sqrt() + eps);
            }
        }
    }
}
