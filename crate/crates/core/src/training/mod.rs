//! Loss, optimizer, regularizers and the epoch loop.
//!
//! Randomness is fully determined by `(seed, worker count)`:
//!
//! * the epoch-`e` shuffle uses `ChaCha8(seed)` on stream `u64::MAX - e`;
//! * the example at position `k` of epoch `e`'s shuffled order draws its
//!   dropout masks and noise from `ChaCha8(seed)` on stream `(e << 32) | k`.
//!
//! A batch is split into `workers` contiguous chunks; each worker sums its
//! chunk in order and the chunk sums are then added in chunk order, so the
//! floating-point reduction order depends only on the worker count.

mod model;
mod optim;
mod regularize;

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use model::{
    backward, capsule_features, example_gradient, forward_full, predict_proba, ForwardCache, Model,
    ModelConfig, ModelParams,
};
pub use optim::{
    clip_by_global_norm, clip_by_value, clip_gradients, cross_entropy, global_norm, AdamConfig,
    AdamState, ClipMode, MIN_PROB,
};
pub use regularize::{
    apply_channel_mask, apply_mask, dropout, dropout_mask, gaussian_noise, spatial_dropout, Mode,
    NoiseSite, Regularization,
};

use crate::error::{Error, Result};
use crate::evaluation::{confusion_k, metrics};
use crate::nncore::predict_class;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub clip_norm: f64,
    pub clip_mode: ClipMode,
    pub spatial_dropout: f64,
    pub capsule_dropout: f64,
    pub noise_std: f64,
    pub noise_site: NoiseSite,
    pub max_epochs: usize,
    pub patience: usize,
    pub seed: u64,
    pub workers: usize,
    pub freeze_embeddings: bool,
    /// When false, history records carry `seconds = 0` so that reruns are
    /// byte-identical.
    pub record_time: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 512,
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            clip_norm: 1.0,
            clip_mode: ClipMode::GlobalNorm,
            spatial_dropout: 0.3,
            capsule_dropout: 0.25,
            noise_std: 0.1,
            noise_site: NoiseSite::Capsule,
            max_epochs: 50,
            patience: 5,
            seed: 0,
            workers: 1,
            freeze_embeddings: false,
            record_time: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        for (name, rate) in [
            ("spatial_dropout", self.spatial_dropout),
            ("capsule_dropout", self.capsule_dropout),
            ("beta1", self.beta1),
            ("beta2", self.beta2),
        ] {
            if !(0.0..1.0).contains(&rate) {
                return bad(format!("{name} must lie in [0, 1), got {rate}"));
            }
        }
        if !(self.noise_std >= 0.0 && self.noise_std.is_finite()) {
            return bad(format!("noise_std must be finite and >= 0, got {}", self.noise_std));
        }
        if !(self.clip_norm > 0.0) {
            return bad(format!("clip_norm must be positive, got {}", self.clip_norm));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning_rate must be positive, got {}", self.learning_rate));
        }
        if !(self.epsilon > 0.0) {
            return bad(format!("epsilon must be positive, got {}", self.epsilon));
        }
        if self.batch_size == 0 || self.workers == 0 || self.max_epochs == 0 {
            return bad("batch_size, workers and max_epochs must be at least 1".into());
        }
        Ok(())
    }

    pub fn regularization(&self) -> Regularization {
        Regularization {
            spatial_dropout: self.spatial_dropout,
            capsule_dropout: self.capsule_dropout,
            noise_std: self.noise_std,
            noise_site: self.noise_site,
        }
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate,
            beta1: self.beta1,
            beta2: self.beta2,
            epsilon: self.epsilon,
        }
    }
}

/// One encoded, labelled example.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Sample {
    pub ids: Vec<usize>,
    pub label: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub dev_macro_f1: f64,
    pub seconds: f64,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    /// Parameters from the epoch with the best dev macro-F1.
    pub model: Model,
    pub best_epoch: usize,
    pub history: Vec<EpochRecord>,
}

pub fn example_rng(seed: u64, epoch: usize, position: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((epoch as u64) << 32) | position as u64);
    rng
}

fn shuffle_rng(seed: u64, epoch: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(u64::MAX - epoch as u64);
    rng
}

/// Splits `0..len` into at most `parts` contiguous, near-equal ranges.
fn chunk_ranges(len: usize, parts: usize) -> Vec<std::ops::Range<usize>> {
    let parts = parts.min(len).max(1);
    let base = len / parts;
    let extra = len % parts;
    let mut out = Vec::with_capacity(parts);
    let mut start = 0;
    for p in 0..parts {
        let size = base + usize::from(p < extra);
        out.push(start..start + size);
        start += size;
    }
    out
}

/// Summed gradients and losses for `batch` (positions `first..` in the epoch order).
fn batch_gradient(
    model: &Model,
    samples: &[Sample],
    batch: &[usize],
    first: usize,
    epoch: usize,
    cfg: &TrainConfig,
    buffers: &mut [ModelParams],
) -> Result<f64> {
    let reg = cfg.regularization();
    let ranges = chunk_ranges(batch.len(), buffers.len());
    let work = |range: std::ops::Range<usize>, grads: &mut ModelParams| -> Result<f64> {
        grads.fill_zero();
        let mut loss = 0.0;
        for k in range {
            let s = &samples[batch[k]];
            let mut rng = example_rng(cfg.seed, epoch, first + k);
            loss += example_gradient(&s.ids, s.label, model, &reg, Mode::Train, &mut rng, grads)?;
        }
        Ok(loss)
    };

    let losses: Vec<Result<f64>> = if ranges.len() == 1 {
        vec![work(ranges[0].clone(), &mut buffers[0])]
    } else {
        std::thread::scope(|scope| {
            let handles: Vec<_> = ranges
                .iter()
                .cloned()
                .zip(buffers.iter_mut())
                .map(|(range, grads)| scope.spawn(|| work(range, grads)))
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("gradient worker panicked"))
                .collect()
        })
    };

    let mut total = 0.0;
    for l in losses {
        total += l?;
    }
    let (head, rest) = buffers.split_at_mut(1);
    for b in &rest[..ranges.len() - 1] {
        head[0].add_assign(b);
    }
    Ok(total)
}

fn check_samples(samples: &[Sample], cfg: &ModelConfig) -> Result<()> {
    for s in samples {
        if s.label >= cfg.num_classes {
            return Err(Error::LabelOutOfRange(s.label));
        }
        if s.ids.is_empty() {
            return Err(Error::EmptySequence);
        }
        if let Some(&id) = s.ids.iter().find(|&&id| id >= cfg.vocab_size) {
            return Err(Error::IdOutOfRange {
                id,
                size: cfg.vocab_size,
            });
        }
    }
    Ok(())
}

/// Eval-mode class predictions, computed on `workers` threads.
pub fn predict_all(model: &Model, inputs: &[Vec<usize>], workers: usize) -> Result<Vec<usize>> {
    let ranges = chunk_ranges(inputs.len(), workers);
    let run = |range: std::ops::Range<usize>| -> Result<Vec<usize>> {
        inputs[range]
            .iter()
            .map(|ids| predict_proba(ids, model).map(|p| predict_class(&p)))
            .collect()
    };
    if ranges.len() <= 1 {
        return run(0..inputs.len());
    }
    let parts: Vec<Result<Vec<usize>>> = std::thread::scope(|scope| {
        let handles: Vec<_> = ranges.into_iter().map(|r| scope.spawn(move || run(r))).collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("prediction worker panicked"))
            .collect()
    });
    let mut out = Vec::with_capacity(inputs.len());
    for p in parts {
        out.extend(p?);
    }
    Ok(out)
}

pub fn macro_f1_on(model: &Model, samples: &[Sample], workers: usize) -> Result<f64> {
    let inputs: Vec<Vec<usize>> = samples.iter().map(|s| s.ids.clone()).collect();
    let golds: Vec<usize> = samples.iter().map(|s| s.label).collect();
    let preds = predict_all(model, &inputs, workers)?;
    let cm = confusion_k(&golds, &preds, model.config.num_classes)?;
    Ok(metrics(&cm).macro_avg.f1)
}

pub fn accuracy_on(model: &Model, samples: &[Sample], workers: usize) -> Result<f64> {
    let inputs: Vec<Vec<usize>> = samples.iter().map(|s| s.ids.clone()).collect();
    let preds = predict_all(model, &inputs, workers)?;
    let correct = preds.iter().zip(samples).filter(|(p, s)| **p == s.label).count();
    Ok(correct as f64 / samples.len().max(1) as f64)
}

/// Trains `model` and returns the best-dev
/// parameters. Without a dev set, the training set is scored instead.
/// `on_epoch` sees every history record as soon as it is produced.
pub fn train(
    model: Model,
    train_set: &[Sample],
    dev_set: Option<&[Sample]>,
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<TrainOutcome> {
    cfg.validate()?;
    model.config.validate()?;
    if train_set.is_empty() {
        return Err(Error::EmptyDataset);
    }
    check_samples(train_set, &model.config)?;
    let dev_set = match dev_set {
        Some(d) if !d.is_empty() => d,
        _ => train_set,
    };
    check_samples(dev_set, &model.config)?;

    let mut model = model;
    let mut adam = AdamState::new(model.params.tensors().iter().map(|t| t.data.len()));
    let adam_cfg = cfg.adam();
    let workers = cfg.workers.min(cfg.batch_size).max(1);
    let mut buffers = vec![ModelParams::zeros(&model.config); workers];

    let mut history = Vec::new();
    let mut best: Option<(f64, usize, ModelParams)> = None;
    let mut since_best = 0;

    for epoch in 1..=cfg.max_epochs {
        let started = Instant::now();
        let mut order: Vec<usize> = (0..train_set.len()).collect();
        order.shuffle(&mut shuffle_rng(cfg.seed, epoch));

        let mut loss_sum = 0.0;
        for (b, batch) in order.chunks(cfg.batch_size).enumerate() {
            let first = b * cfg.batch_size;
            loss_sum += batch_gradient(&model, train_set, batch, first, epoch, cfg, &mut buffers)?;

            let grads = &mut buffers[0];
            grads.scale(1.0 / batch.len() as f64);
            if cfg.freeze_embeddings {
                grads.embedding.weights.as_mut_slice().fill(0.0);
            }
            if !grads.is_finite() {
                return Err(Error::NonFinite(format!("gradients in epoch {epoch}")));
            }
            let mut g = grads.tensors_mut();
            clip_gradients(&mut g, cfg.clip_norm, cfg.clip_mode);
            adam.step(&mut model.params.tensors_mut(), &g, &adam_cfg)?;
            model.params.embedding.clear_pad();
            if !model.params.is_finite() {
                return Err(Error::NonFinite(format!("parameters in epoch {epoch}")));
            }
        }
        let train_loss = loss_sum / train_set.len() as f64;
        if !train_loss.is_finite() {
            return Err(Error::NonFinite(format!("training loss in epoch {epoch}")));
        }

        let dev_f1 = macro_f1_on(&model, dev_set, cfg.workers)?;
        let record = EpochRecord {
            epoch,
            train_loss,
            dev_macro_f1: dev_f1,
            seconds: if cfg.record_time {
                started.elapsed().as_secs_f64()
            } else {
                0.0
            },
        };
        on_epoch(&record);
        history.push(record);

        match &best {
            Some((f1, _, _)) if dev_f1 <= *f1 => since_best += 1,
            _ => {
                best = Some((dev_f1, epoch, model.params.clone()));
                since_best = 0;
            }
        }
        if since_best > cfg.patience {
            break;
        }
    }

    let (_, best_epoch, params) = best.expect("at least one epoch ran");
    Ok(TrainOutcome {
        model: Model {
            config: model.config,
            params,
        },
        best_epoch,
        history,
    })
}

/// History as JSON lines.
pub fn history_jsonl(history: &[EpochRecord]) -> Result<String> {
    let mut out = String::new();
    for r in history {
        out.push_str(&serde_json::to_string(r)?);
        out.push('\n');
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedvocab::EmbeddingTable;
    use crate::nncore::finite_diff_check;
    use rand::Rng;

    pub(crate) fn tiny_config() -> ModelConfig {
        ModelConfig {
            vocab_size: 12,
            embed_dim: 8,
            hidden_dim: 4,
            num_capsules: 3,
            capsule_dim: 2,
            routing_iters: 2,
            num_classes: 6,
            dense_bias: true,
        }
    }

    fn tiny_model(seed: u64) -> Model {
        let cfg = tiny_config();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut table = EmbeddingTable::zeros(cfg.vocab_size, cfg.embed_dim);
        table
            .weights
            .as_mut_slice()
            .iter_mut()
            .for_each(|v| *v = rng.gen_range(-0.5..0.5));
        table.clear_pad();
        let params = ModelParams::init(&cfg, table, &mut rng).unwrap();
        Model { config: cfg, params }
    }

    fn toy_samples() -> Vec<Sample> {
        (0..18)
            .map(|k| Sample {
                ids: vec![2 + k % 6, 8 + k % 4, 1 + k % 3],
                label: k % 6,
            })
            .collect()
    }

    #[test]
    fn chunking_covers_everything() {
        assert_eq!(chunk_ranges(10, 3), vec![0..4, 4..7, 7..10]);
        assert_eq!(chunk_ranges(2, 5), vec![0..1, 1..2]);
        assert_eq!(chunk_ranges(0, 4), vec![0..0]);
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        let bad = [
            TrainConfig { spatial_dropout: 1.0, ..Default::default() },
            TrainConfig { capsule_dropout: -0.1, ..Default::default() },
            TrainConfig { clip_norm: 0.0, ..Default::default() },
            TrainConfig { batch_size: 0, ..Default::default() },
            TrainConfig { noise_std: f64::NAN, ..Default::default() },
        ];
        for c in bad {
            assert!(c.validate().is_err(), "{c:?}");
        }
    }

    #[test]
    fn single_token_runs_end_to_end() {
        let model = tiny_model(1);
        let p = predict_proba(&[5], &model).unwrap();
        assert_eq!(p.len(), 6);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(matches!(predict_proba(&[], &model), Err(Error::EmptySequence)));
        assert!(matches!(predict_proba(&[99], &model), Err(Error::IdOutOfRange { .. })));
    }

    #[test]
    fn eval_forward_is_repeatable() {
        let model = tiny_model(2);
        let reg = TrainConfig::default().regularization();
        let mut r1 = ChaCha8Rng::seed_from_u64(1);
        let mut r2 = ChaCha8Rng::seed_from_u64(2);
        let (a, _) = forward_full(&[2, 3, 4], &model, &reg, Mode::Eval, &mut r1).unwrap();
        let (b, _) = forward_full(&[2, 3, 4], &model, &reg, Mode::Eval, &mut r2).unwrap();
        assert_eq!(a, b);
        assert_eq!(a, predict_proba(&[2, 3, 4], &model).unwrap());
    }

    #[test]
    fn full_model_gradient_matches_finite_differences() {
        let model = tiny_model(3);
        let ids = [2usize, 7, 3, 7, 10];
        let label = 4;
        let reg = Regularization::none();
        let mut grads = ModelParams::zeros(&model.config);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        example_gradient(&ids, label, &model, &reg, Mode::Train, &mut rng, &mut grads).unwrap();

        let analytic = grads.flatten();
        let mut theta = model.params.flatten();
        let all: Vec<usize> = (0..theta.len()).collect();
        let mut scratch = model.clone();
        let err = finite_diff_check(&mut theta, &analytic, &all, 1e-5, |t| {
            scratch.params.assign_flat(t).unwrap();
            let p = predict_proba(&ids, &scratch).unwrap();
            cross_entropy(&p, label).unwrap().0
        });
        assert!(err < 1e-4, "max relative error {err:e}");
    }

    #[test]
    fn noise_on_logits_also_differentiates() {
        // with noise and dropout on, backward still matches the same
        // randomness replayed through forward
        let model = tiny_model(4);
        let ids = [3usize, 4, 9];
        let reg = Regularization {
            spatial_dropout: 0.3,
            capsule_dropout: 0.25,
            noise_std: 0.1,
            noise_site: NoiseSite::Logits,
        };
        let mut grads = ModelParams::zeros(&model.config);
        example_gradient(&ids, 1, &model, &reg, Mode::Train, &mut example_rng(9, 1, 0), &mut grads).unwrap();
        let analytic = grads.flatten();
        let mut theta = model.params.flatten();
        let sample: Vec<usize> = (0..theta.len()).step_by(7).collect();
        let mut scratch = model.clone();
        let err = finite_diff_check(&mut theta, &analytic, &sample, 1e-5, |t| {
            scratch.params.assign_flat(t).unwrap();
            let (p, _) = forward_full(&ids, &scratch, &reg, Mode::Train, &mut example_rng(9, 1, 0)).unwrap();
            cross_entropy(&p, 1).unwrap().0
        });
        assert!(err < 1e-4, "{err:e}");
    }

    #[test]
    fn training_is_deterministic() {
        let cfg = TrainConfig {
            batch_size: 4,
            max_epochs: 3,
            patience: 10,
            seed: 11,
            workers: 2,
            record_time: false,
            ..Default::default()
        };
        let data = toy_samples();
        let a = train(tiny_model(5), &data, None, &cfg, |_| {}).unwrap();
        let b = train(tiny_model(5), &data, None, &cfg, |_| {}).unwrap();
        assert_eq!(history_jsonl(&a.history).unwrap(), history_jsonl(&b.history).unwrap());
        assert_eq!(a.model.params, b.model.params);
        assert_eq!(a.history.len(), 3);
    }

    #[test]
    fn zero_patience_stops_after_first_stall() {
        let cfg = TrainConfig {
            batch_size: 6,
            max_epochs: 40,
            patience: 0,
            learning_rate: 1e-6,
            record_time: false,
            ..Default::default()
        };
        let data = toy_samples();
        let out = train(tiny_model(6), &data, None, &cfg, |_| {}).unwrap();
        let h = &out.history;
        let first_stall = (1..h.len())
            .find(|&i| h[i].dev_macro_f1 <= h[..i].iter().map(|r| r.dev_macro_f1).fold(f64::MIN, f64::max))
            .expect("tiny learning rate stalls");
        assert_eq!(h.len(), first_stall + 1);
    }

    #[test]
    fn rejects_bad_datasets() {
        let cfg = TrainConfig::default();
        assert!(matches!(train(tiny_model(0), &[], None, &cfg, |_| {}), Err(Error::EmptyDataset)));
        let bad = [Sample { ids: vec![2], label: 6 }];
        assert!(matches!(
            train(tiny_model(0), &bad, None, &cfg, |_| {}),
            Err(Error::LabelOutOfRange(6))
        ));
    }

    #[test]
    fn frozen_embeddings_stay_put_and_pad_stays_zero() {
        let cfg = TrainConfig {
            batch_size: 5,
            max_epochs: 2,
            freeze_embeddings: true,
            ..Default::default()
        };
        let model = tiny_model(7);
        let before = model.params.embedding.clone();
        let out = train(model, &toy_samples(), None, &cfg, |_| {}).unwrap();
        assert_eq!(out.model.params.embedding, before);

        let cfg = TrainConfig { freeze_embeddings: false, ..cfg };
        let mut data = toy_samples();
        data[0].ids.push(0);
        let out = train(tiny_model(7), &data, None, &cfg, |_| {}).unwrap();
        assert!(out.model.params.embedding.row(0).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn history_lines_have_the_expected_keys() {
        let rec = EpochRecord {
            epoch: 1,
            train_loss: 1.5,
            dev_macro_f1: 0.25,
            seconds: 0.0,
        };
        let line = history_jsonl(&[rec]).unwrap();
        let v: serde_json::Value = serde_json::from_str(line.trim()).unwrap();
        for key in ["epoch", "train_loss", "dev_macro_f1", "seconds"] {
            assert!(v.get(key).is_some());
        }
    }
}
