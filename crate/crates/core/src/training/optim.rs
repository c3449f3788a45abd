use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::dot;

/// Smallest gold probability fed to the log.
pub const MIN_PROB: f64 = 1e-12;

/// `−ln f_gold` and its gradient w.r.t. the logits, `f − onehot(gold)`.
pub fn cross_entropy(probs: &[f64], gold: usize) -> Result<(f64, Vec<f64>)> {
    if gold >= probs.len() {
        return Err(Error::LabelOutOfRange(gold));
    }
    let loss = -probs[gold].max(MIN_PROB).ln();
    let mut grad = probs.to_vec();
    grad[gold] -= 1.0;
    Ok((loss, grad))
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClipMode {
    /// Rescale all gradients together when their joint L2 norm exceeds the limit.
    #[default]
    GlobalNorm,
    /// Clamp every gradient entry into `[-limit, limit]`.
    Value,
}

pub fn global_norm(grads: &[&mut [f64]]) -> f64 {
    grads.iter().map(|g| dot(g, g)).sum::<f64>().sqrt()
}

/// Returns the norm before clipping.
pub fn clip_by_global_norm(grads: &mut [&mut [f64]], clip_norm: f64) -> f64 {
    let norm = global_norm(grads);
    if norm > clip_norm {
        let scale = clip_norm / norm;
        for g in grads.iter_mut() {
            g.iter_mut().for_each(|v| *v *= scale);
        }
    }
    norm
}

pub fn clip_by_value(grads: &mut [&mut [f64]], limit: f64) {
    for g in grads.iter_mut() {
        g.iter_mut().for_each(|v| *v = v.clamp(-limit, limit));
    }
}

pub fn clip_gradients(grads: &mut [&mut [f64]], limit: f64, mode: ClipMode) {
    match mode {
        ClipMode::GlobalNorm => {
            clip_by_global_norm(grads, limit);
        }
        ClipMode::Value => clip_by_value(grads, limit),
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Per-tensor first and second moments plus the shared step counter.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
    pub t: u64,
}

impl AdamState {
    pub fn new(lens: impl IntoIterator<Item = usize>) -> Self {
        let (m, v) = lens
            .into_iter()
            .map(|n| (vec![0.0; n], vec![0.0; n]))
            .unzip();
        AdamState { m, v, t: 0 }
    }

    /// One bias-corrected Adam update over every tensor.
    pub fn step(&mut self, params: &mut [&mut [f64]], grads: &[&mut [f64]], cfg: &AdamConfig) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::shape("AdamState::step", self.m.len(), params.len().min(grads.len())));
        }
        for ((p, g), m) in params.iter().zip(grads).zip(&self.m) {
            if p.len() != m.len() || g.len() != m.len() {
                return Err(Error::shape("AdamState::step tensor", m.len(), p.len()));
            }
        }
        self.t += 1;
        let t = self.t as i32;
        let bc1 = 1.0 - cfg.beta1.powi(t);
        let bc2 = 1.0 - cfg.beta2.powi(t);
        for (((p, g), m), v) in params.iter_mut().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            for k in 0..p.len() {
                let gk = g[k];
                m[k] = cfg.beta1 * m[k] + (1.0 - cfg.beta1) * gk;
                v[k] = cfg.beta2 * v[k] + (1.0 - cfg.beta2) * gk * gk;
                let m_hat = m[k] / bc1;
                let v_hat = v[k] / bc2;
                p[k] -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.epsilon);
            }
        }
        Ok(())
    }
}
