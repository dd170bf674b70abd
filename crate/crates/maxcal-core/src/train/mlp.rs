//! A single-hidden-layer rectifier network over flat row-major weight
//! matrices, with hand-written forward and backward passes.

use crate::loss::{maxent_loss, maxent_loss_grad, LossConfig, LossError};
use crate::solver::MomentConstraints;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Feed-forward network `d_in → hidden (rectifier) → k` with exposed
/// parameters and penultimate activations.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    pub d_in: usize,
    pub hidden: usize,
    pub k: usize,
    /// `hidden × d_in`, row per hidden unit.
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    /// `k × hidden`, row per output logit.
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
}

/// Parameter-shaped gradient accumulator for one batch.
#[derive(Debug, Clone)]
pub struct MlpGradients {
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
}

impl MlpModel {
    /// He-style initialization: weights scaled by `sqrt(2/fan_in)`, zero
    /// biases.
    pub fn init(d_in: usize, hidden: usize, k: usize, rng: &mut ChaCha8Rng) -> Self {
        let mut sample = |n: usize, fan_in: usize| -> Vec<f64> {
            let scale = (2.0 / fan_in as f64).sqrt();
            (0..n)
                .map(|_| scale * rng.sample::<f64, _>(StandardNormal))
                .collect()
        };
        let w1 = sample(hidden * d_in, d_in);
        let w2 = sample(k * hidden, hidden);
        Self {
            d_in,
            hidden,
            k,
            w1,
            b1: vec![0.0; hidden],
            w2,
            b2: vec![0.0; k],
        }
    }

    /// Hidden pre-activations and rectified activations for one input row.
    fn hidden_pass(&self, x: &[f64]) -> (Vec<f64>, Vec<f64>) {
        debug_assert_eq!(x.len(), self.d_in);
        let mut z1 = self.b1.clone();
        for h in 0..self.hidden {
            let row = &self.w1[h * self.d_in..(h + 1) * self.d_in];
            let mut acc = 0.0;
            for (w, v) in row.iter().zip(x) {
                acc += w * v;
            }
            z1[h] += acc;
        }
        let a1 = z1.iter().map(|&z| z.max(0.0)).collect();
        (z1, a1)
    }

    fn output_pass(&self, a1: &[f64]) -> Vec<f64> {
        let mut g = self.b2.clone();
        for o in 0..self.k {
            let row = &self.w2[o * self.hidden..(o + 1) * self.hidden];
            let mut acc = 0.0;
            for (w, v) in row.iter().zip(a1) {
                acc += w * v;
            }
            g[o] += acc;
        }
        g
    }

    /// Logits for one input row.
    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        let (_, a1) = self.hidden_pass(x);
        self.output_pass(&a1)
    }

    /// Penultimate (rectified hidden) activations for one input row.
    pub fn penultimate(&self, x: &[f64]) -> Vec<f64> {
        self.hidden_pass(x).1
    }

    /// Mean loss and parameter gradients over a batch of `(row, target)`
    /// pairs, with the logit gradient supplied by the configured loss.
    pub fn batch_gradients(
        &self,
        rows: &[&[f64]],
        targets: &[&[f64]],
        loss: &LossConfig,
        mc: &MomentConstraints,
    ) -> Result<(f64, MlpGradients), LossError> {
        debug_assert_eq!(rows.len(), targets.len());
        let n = rows.len() as f64;
        let mut grads = MlpGradients {
            w1: vec![0.0; self.w1.len()],
            b1: vec![0.0; self.b1.len()],
            w2: vec![0.0; self.w2.len()],
            b2: vec![0.0; self.b2.len()],
        };
        let mut total_loss = 0.0;
        for (x, target) in rows.iter().zip(targets) {
            let (z1, a1) = self.hidden_pass(x);
            let logits = self.output_pass(&a1);
            total_loss += maxent_loss(&logits, target, loss, mc)?;
            let dg = maxent_loss_grad(&logits, target, loss, mc)?;
            // Output layer: dW2[o][h] += dg[o]·a1[h], db2 += dg.
            for o in 0..self.k {
                grads.b2[o] += dg[o];
                let row = &mut grads.w2[o * self.hidden..(o + 1) * self.hidden];
                for h in 0..self.hidden {
                    row[h] += dg[o] * a1[h];
                }
            }
            // Hidden layer: da1 = W2ᵀ dg, gated by the rectifier.
            for h in 0..self.hidden {
                if z1[h] <= 0.0 {
                    continue;
                }
                let mut da = 0.0;
                for o in 0..self.k {
                    da += self.w2[o * self.hidden + h] * dg[o];
                }
                grads.b1[h] += da;
                let row = &mut grads.w1[h * self.d_in..(h + 1) * self.d_in];
                for (j, &v) in x.iter().enumerate() {
                    row[j] += da * v;
                }
            }
        }
        // Mean reduction over the batch.
        for g in grads
            .w1
            .iter_mut()
            .chain(&mut grads.b1)
            .chain(&mut grads.w2)
            .chain(&mut grads.b2)
        {
            *g /= n;
        }
        Ok((total_loss / n, grads))
    }

    /// Whether every parameter is finite.
    pub fn is_finite(&self) -> bool {
        self.w1
            .iter()
            .chain(&self.b1)
            .chain(&self.w2)
            .chain(&self.b2)
            .all(|v| v.is_finite())
    }

    /// One plain gradient-descent step.
    pub fn apply_update(&mut self, grads: &MlpGradients, lr: f64) {
        for (w, g) in self.w1.iter_mut().zip(&grads.w1) {
            *w -= lr * g;
        }
        for (b, g) in self.b1.iter_mut().zip(&grads.b1) {
            *b -= lr * g;
        }
        for (w, g) in self.w2.iter_mut().zip(&grads.w2) {
            *w -= lr * g;
        }
        for (b, g) in self.b2.iter_mut().zip(&grads.b2) {
            *b -= lr * g;
        }
    }

    /// Flattened read access to all parameters, for finite-difference
    /// checks: (w1, b1, w2, b2) concatenated.
    pub fn param_count(&self) -> usize {
        self.w1.len() + self.b1.len() + self.w2.len() + self.b2.len()
    }

    /// Read parameter `index` in the flattened order.
    pub fn param(&self, index: usize) -> f64 {
        let mut i = index;
        if i < self.w1.len() {
            return self.w1[i];
        }
        i -= self.w1.len();
        if i < self.b1.len() {
            return self.b1[i];
        }
        i -= self.b1.len();
        if i < self.w2.len() {
            return self.w2[i];
        }
        i -= self.w2.len();
        self.b2[i]
    }

    /// Write parameter `index` in the flattened order.
    pub fn set_param(&mut self, index: usize, value: f64) {
        let mut i = index;
        if i < self.w1.len() {
            self.w1[i] = value;
            return;
        }
        i -= self.w1.len();
        if i < self.b1.len() {
            self.b1[i] = value;
            return;
        }
        i -= self.b1.len();
        if i < self.w2.len() {
            self.w2[i] = value;
            return;
        }
        i -= self.w2.len();
        self.b2[i] = value;
    }

    /// Gradient entry `index` of a batch gradient, in the same flattened
    /// order as [`MlpModel::param`].
    pub fn grad_entry(grads: &MlpGradients, index: usize) -> f64 {
        let mut i = index;
        if i < grads.w1.len() {
            return grads.w1[i];
        }
        i -= grads.w1.len();
        if i < grads.b1.len() {
            return grads.b1[i];
        }
        i -= grads.b1.len();
        if i < grads.w2.len() {
            return grads.w2[i];
        }
        i -= grads.w2.len();
        grads.b2[i]
    }
}
