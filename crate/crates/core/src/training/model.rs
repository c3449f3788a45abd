use rand::Rng;
use serde::{Deserialize, Serialize};

use super::regularize::{
    apply_channel_mask, apply_mask, dropout, gaussian_noise, spatial_dropout, Mode, NoiseSite,
    Regularization,
};
use crate::capsule::{capsule_backward, capsule_layer, CapsuleCache, CapsuleParams};
use crate::embedvocab::{embed, embed_backward, EmbeddingTable};
use crate::error::{Error, Result};
use crate::linalg::all_finite;
use crate::nncore::{
    bigru_backward, bigru_forward, dense_backward, dense_softmax_forward, BiGruCache, DenseParams,
    GruParams, TensorView,
};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub vocab_size: usize,
    pub embed_dim: usize,
    /// Per-direction GRU width; the encoder emits `2 · hidden_dim` per token.
    pub hidden_dim: usize,
    pub num_capsules: usize,
    pub capsule_dim: usize,
    pub routing_iters: usize,
    pub num_classes: usize,
    pub dense_bias: bool,
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let dims = [
            ("vocab_size", self.vocab_size),
            ("embed_dim", self.embed_dim),
            ("hidden_dim", self.hidden_dim),
            ("num_capsules", self.num_capsules),
            ("capsule_dim", self.capsule_dim),
            ("routing_iters", self.routing_iters),
            ("num_classes", self.num_classes),
        ];
        for (name, v) in dims {
            if v == 0 {
                return Err(Error::InvalidConfig(format!("{name} must be positive")));
            }
        }
        Ok(())
    }

    pub fn encoder_dim(&self) -> usize {
        2 * self.hidden_dim
    }

    pub fn feature_dim(&self) -> usize {
        self.num_capsules * self.capsule_dim
    }
}

/// Every trainable tensor of the network. Also used as the gradient buffer.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    pub embedding: EmbeddingTable,
    pub gru_fwd: GruParams,
    pub gru_bwd: GruParams,
    pub capsule: CapsuleParams,
    pub dense: DenseParams,
}

impl ModelParams {
    pub fn zeros(cfg: &ModelConfig) -> Self {
        ModelParams {
            embedding: EmbeddingTable::zeros(cfg.vocab_size, cfg.embed_dim),
            gru_fwd: GruParams::zeros(cfg.embed_dim, cfg.hidden_dim),
            gru_bwd: GruParams::zeros(cfg.embed_dim, cfg.hidden_dim),
            capsule: CapsuleParams::zeros(cfg.encoder_dim(), cfg.num_capsules, cfg.capsule_dim),
            dense: DenseParams::zeros(cfg.feature_dim(), cfg.num_classes, cfg.dense_bias),
        }
    }

    /// Glorot-initialized layers on top of a prepared embedding table.
    pub fn init(cfg: &ModelConfig, embedding: EmbeddingTable, rng: &mut impl Rng) -> Result<Self> {
        cfg.validate()?;
        if embedding.vocab_size() != cfg.vocab_size || embedding.dim() != cfg.embed_dim {
            return Err(Error::DimensionMismatch {
                context: "embedding table".into(),
                expected: cfg.vocab_size * cfg.embed_dim,
                found: embedding.vocab_size() * embedding.dim(),
            });
        }
        Ok(ModelParams {
            embedding,
            gru_fwd: GruParams::init(cfg.embed_dim, cfg.hidden_dim, rng),
            gru_bwd: GruParams::init(cfg.embed_dim, cfg.hidden_dim, rng),
            capsule: CapsuleParams::init(cfg.encoder_dim(), cfg.num_capsules, cfg.capsule_dim, rng),
            dense: DenseParams::init(cfg.feature_dim(), cfg.num_classes, cfg.dense_bias, rng),
        })
    }

    pub fn tensors(&self) -> Vec<TensorView<'_>> {
        let mut out = vec![TensorView {
            name: "embedding.weight".into(),
            shape: self.embedding.weights.shape().to_vec(),
            data: self.embedding.weights.as_slice(),
        }];
        out.extend(self.gru_fwd.tensors("gru_fwd"));
        out.extend(self.gru_bwd.tensors("gru_bwd"));
        out.extend(self.capsule.tensors("capsule"));
        out.extend(self.dense.tensors("dense"));
        out
    }

    /// Same order as [`ModelParams::tensors`].
    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = vec![self.embedding.weights.as_mut_slice()];
        out.extend(self.gru_fwd.tensors_mut());
        out.extend(self.gru_bwd.tensors_mut());
        out.extend(self.capsule.tensors_mut());
        out.extend(self.dense.tensors_mut());
        out
    }

    pub fn num_values(&self) -> usize {
        self.tensors().iter().map(|t| t.data.len()).sum()
    }

    pub fn fill_zero(&mut self) {
        for t in self.tensors_mut() {
            t.fill(0.0);
        }
    }

    pub fn add_assign(&mut self, other: &ModelParams) {
        let theirs = other.tensors();
        for (mine, theirs) in self.tensors_mut().into_iter().zip(theirs) {
            crate::linalg::add_assign(mine, theirs.data);
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for t in self.tensors_mut() {
            t.iter_mut().for_each(|v| *v *= factor);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| all_finite(t.data))
    }

    /// All values concatenated in tensor order.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_values());
        for t in self.tensors() {
            out.extend_from_slice(t.data);
        }
        out
    }

    pub fn assign_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.num_values() {
            return Err(Error::shape("ModelParams::assign_flat", self.num_values(), flat.len()));
        }
        let mut off = 0;
        for t in self.tensors_mut() {
            let n = t.len();
            t.copy_from_slice(&flat[off..off + n]);
            off += n;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    pub config: ModelConfig,
    pub params: ModelParams,
}

/// Everything the backward pass needs from one forward pass.
#[derive(Clone, Debug)]
pub struct ForwardCache {
    pub ids: Vec<usize>,
    pub spatial_mask: Option<Vec<f64>>,
    pub encoder: BiGruCache,
    pub capsule: CapsuleCache,
    pub capsule_mask: Option<Vec<f64>>,
    /// Input actually fed to the dense layer (after dropout and noise).
    pub features: Vec<f64>,
    pub logits: Vec<f64>,
    pub probs: Vec<f64>,
}

/// embed → spatial dropout → noise → Bi-GRU → capsules → dropout → noise →
/// dense → softmax. With [`NoiseSite::Logits`] the second noise draw is
/// added to the logits instead.
pub fn forward_full(
    ids: &[usize],
    model: &Model,
    reg: &Regularization,
    mode: Mode,
    rng: &mut impl Rng,
) -> Result<(Vec<f64>, ForwardCache)> {
    if ids.is_empty() {
        return Err(Error::EmptySequence);
    }
    let p = &model.params;
    let mut x = embed(ids, &p.embedding)?;
    let spatial_mask = spatial_dropout(&mut x, reg.spatial_dropout, mode, rng);
    gaussian_noise(x.as_mut_slice(), reg.noise_std, mode, rng);

    let (h, encoder) = bigru_forward(&x, &p.gru_fwd, &p.gru_bwd)?;
    let (mut features, capsule) = capsule_layer(&h, &p.capsule, model.config.routing_iters)?;
    let capsule_mask = dropout(&mut features, reg.capsule_dropout, mode, rng);
    if reg.noise_site == NoiseSite::Capsule {
        gaussian_noise(&mut features, reg.noise_std, mode, rng);
    }

    let mut logits = p.dense.logits(&features)?;
    if reg.noise_site == NoiseSite::Logits {
        gaussian_noise(&mut logits, reg.noise_std, mode, rng);
    }
    let probs = crate::linalg::softmax(&logits);
    if !all_finite(&probs) {
        return Err(Error::NonFinite("class probabilities".into()));
    }

    let cache = ForwardCache {
        ids: ids.to_vec(),
        spatial_mask,
        encoder,
        capsule,
        capsule_mask,
        features,
        logits,
        probs: probs.clone(),
    };
    Ok((probs, cache))
}

/// Deterministic inference: no dropout, no noise.
pub fn predict_proba(ids: &[usize], model: &Model) -> Result<Vec<f64>> {
    if ids.is_empty() {
        return Err(Error::EmptySequence);
    }
    let p = &model.params;
    let x = embed(ids, &p.embedding)?;
    let (h, _) = bigru_forward(&x, &p.gru_fwd, &p.gru_bwd)?;
    let (features, _) = capsule_layer(&h, &p.capsule, model.config.routing_iters)?;
    let (probs, _) = dense_softmax_forward(&features, &p.dense)?;
    if !all_finite(&probs) {
        return Err(Error::NonFinite("class probabilities".into()));
    }
    Ok(probs)
}

/// Backpropagates `grad_logits` through the cached pass, accumulating into `grads`.
pub fn backward(
    grad_logits: &[f64],
    cache: &ForwardCache,
    model: &Model,
    grads: &mut ModelParams,
) -> Result<()> {
    let p = &model.params;
    // additive noise passes gradients through unchanged
    let mut grad_features = dense_backward(grad_logits, &cache.features, &p.dense, &mut grads.dense)?;
    if let Some(mask) = &cache.capsule_mask {
        apply_mask(&mut grad_features, mask);
    }
    let grad_h = capsule_backward(&grad_features, &cache.capsule, &p.capsule, &mut grads.capsule)?;
    let mut grad_x = bigru_backward(
        &grad_h,
        &cache.encoder,
        &p.gru_fwd,
        &p.gru_bwd,
        &mut grads.gru_fwd,
        &mut grads.gru_bwd,
    )?;
    if let Some(mask) = &cache.spatial_mask {
        apply_channel_mask(&mut grad_x, mask);
    }
    embed_backward(&cache.ids, &grad_x, &mut grads.embedding.weights)
}

/// Forward, cross-entropy and backward for one labelled example. Returns the loss.
pub fn example_gradient(
    ids: &[usize],
    label: usize,
    model: &Model,
    reg: &Regularization,
    mode: Mode,
    rng: &mut impl Rng,
    grads: &mut ModelParams,
) -> Result<f64> {
    let (probs, cache) = forward_full(ids, model, reg, mode, rng)?;
    let (loss, grad_logits) = super::optim::cross_entropy(&probs, label)?;
    if !loss.is_finite() {
        return Err(Error::NonFinite("loss".into()));
    }
    backward(&grad_logits, &cache, model, grads)?;
    Ok(loss)
}

/// Row-major flattened capsule output of one example, for inspection.
pub fn capsule_features(ids: &[usize], model: &Model) -> Result<Vec<f64>> {
    let p = &model.params;
    let x = embed(ids, &p.embedding)?;
    let (h, _) = bigru_forward(&x, &p.gru_fwd, &p.gru_bwd)?;
    Ok(capsule_layer(&h, &p.capsule, model.config.routing_iters)?.0)
}
