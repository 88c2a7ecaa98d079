use serde::{Deserialize, Serialize};

use crate::num::Scalar;

/// Linear decay from `lr_max` at step 0 to zero after `total_steps`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearDecay {
    pub lr_max: f64,
    pub total_steps: usize,
}

impl LinearDecay {
    pub fn at(&self, step: usize) -> f64 {
        if self.total_steps == 0 || step >= self.total_steps {
            return 0.0;
        }
        self.lr_max * (self.total_steps - step) as f64 / self.total_steps as f64
    }
}

/// AdamW with decoupled weight decay over a set of flat parameter slices.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AdamW {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    pub step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Default for AdamW {
    fn default() -> Self {
        AdamW { beta1: 0.9, beta2: 0.999, eps: 1e-8, weight_decay: 0.01, step: 0, m: Vec::new(), v: Vec::new() }
    }
}

impl AdamW {
    /// Applies one update. `params[k]` and `grads[k]` must have equal
    /// lengths; moment buffers are (re)shaped on first use.
    pub fn update<F: Scalar>(&mut self, params: &mut [&mut [F]], grads: &[&[F]], lr: f64) {
        assert_eq!(params.len(), grads.len());
        if self.m.len() != params.len() || self.m.iter().zip(params.iter()).any(|(m, p)| m.len() != p.len()) {
            self.m = params.iter().map(|p| vec![0.0; p.len()]).collect();
            self.v = self.m.clone();
            self.step = 0;
        }
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        for (k, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            let (m, v) = (&mut self.m[k], &mut self.v[k]);
            for i in 0..p.len() {
                let gi = g[i].to_f64_lossy();
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * gi;
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * gi * gi;
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                let mut w = p[i].to_f64_lossy();
                w -= lr * self.weight_decay * w;
                w -= lr * m_hat / (v_hat.sqrt() + self.eps);
                p[i] = F::of(w);
            }
        }
    }
}
