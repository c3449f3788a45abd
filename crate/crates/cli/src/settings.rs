//! Run configuration: profile defaults, then the `--config` JSON file, then
//! command-line flags. Every key can appear in the file or as a flag of the
//! same name (`--batch_size` or `--batch-size`).

use std::path::{Path, PathBuf};

use clap::Args;
use emocaps::embedvocab::Word2VecFormat;
use emocaps::profile::Profile;
use emocaps::training::{ClipMode, ModelConfig, NoiseSite, TrainConfig};
use emocaps::{Error, Result};
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

fn parse_clip_mode(s: &str) -> std::result::Result<ClipMode, String> {
    match s {
        "global_norm" | "global-norm" => Ok(ClipMode::GlobalNorm),
        "value" => Ok(ClipMode::Value),
        _ => Err(format!("expected global_norm or value, got {s:?}")),
    }
}

fn parse_noise_site(s: &str) -> std::result::Result<NoiseSite, String> {
    match s {
        "capsule" => Ok(NoiseSite::Capsule),
        "logits" => Ok(NoiseSite::Logits),
        _ => Err(format!("expected capsule or logits, got {s:?}")),
    }
}

fn parse_format(s: &str) -> std::result::Result<String, String> {
    s.parse::<Word2VecFormat>().map(|_| s.to_string()).map_err(|e| e.to_string())
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize, Args)]
#[serde(default, deny_unknown_fields)]
pub struct Settings {
    /// Size preset: paper or desk.
    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub profile: Option<Profile>,

    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,

    // data
    /// Labelled training file (label<TAB>text).
    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub train: Option<PathBuf>,

    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dev: Option<PathBuf>,

    /// Labelled file scored by `evaluate --checkpoint`.
    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub test: Option<PathBuf>,

    /// Input file for `preprocess` and `predict`.
    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub input: Option<PathBuf>,

    /// Output file; stdout when absent.
    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,

    /// Checkpoint directory written by `train`, read by `predict` and `evaluate`.
    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub checkpoint: Option<PathBuf>,

    /// Directory written by `build-vocab` (vocabulary, lexicon, embedding).
    #[arg(long, visible_alias = "vocab_dir", global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub vocab_dir: Option<PathBuf>,

    /// word2vec file for initialization.
    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub embeddings: Option<PathBuf>,

    /// text or binary.
    #[arg(long, visible_alias = "embeddings_format", global = true, value_parser = parse_format)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub embeddings_format: Option<String>,

    /// Unigram lexicon (word<TAB>count) for segmentation and spelling.
    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lexicon: Option<PathBuf>,

    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub history: Option<PathBuf>,

    /// Report JSON path for `evaluate`.
    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub report: Option<PathBuf>,

    /// Predicted labels, one per line, for `evaluate`.
    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub predictions: Option<PathBuf>,

    /// Gold labels for `evaluate` (label per line, or label<TAB>text).
    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gold: Option<PathBuf>,

    #[arg(long, visible_alias = "min_count", global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub min_count: Option<usize>,

    // model
    #[arg(long, visible_alias = "embed_dim", global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub embed_dim: Option<usize>,

    #[arg(long, visible_alias = "hidden_dim", global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hidden_dim: Option<usize>,

    #[arg(long, visible_alias = "num_capsules", global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub num_capsules: Option<usize>,

    #[arg(long, visible_alias = "capsule_dim", global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub capsule_dim: Option<usize>,

    #[arg(long, visible_alias = "routing_iters", global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub routing_iters: Option<usize>,

    #[arg(long, visible_alias = "dense_bias", global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dense_bias: Option<bool>,

    // optimisation
    #[arg(long, visible_alias = "batch_size", global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub batch_size: Option<usize>,

    #[arg(long, visible_alias = "learning_rate", global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub learning_rate: Option<f64>,

    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta1: Option<f64>,

    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta2: Option<f64>,

    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,

    #[arg(long, visible_alias = "clip_norm", global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub clip_norm: Option<f64>,

    /// global_norm or value.
    #[arg(long, visible_alias = "clip_mode", global = true, value_parser = parse_clip_mode)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub clip_mode: Option<ClipMode>,

    #[arg(long, visible_alias = "spatial_dropout", global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub spatial_dropout: Option<f64>,

    #[arg(long, visible_alias = "capsule_dropout", global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub capsule_dropout: Option<f64>,

    #[arg(long, visible_alias = "noise_std", global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub noise_std: Option<f64>,

    /// capsule or logits.
    #[arg(long, visible_alias = "noise_site", global = true, value_parser = parse_noise_site)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub noise_site: Option<NoiseSite>,

    #[arg(long, visible_alias = "max_epochs", global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_epochs: Option<usize>,

    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub patience: Option<usize>,

    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,

    #[arg(long, visible_alias = "freeze_embeddings", global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub freeze_embeddings: Option<bool>,

    /// Write wall-clock seconds into the history (false gives byte-identical reruns).
    #[arg(long, visible_alias = "record_time", global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub record_time: Option<bool>,
}

impl Settings {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::from(e).in_file(path))?;
        serde_json::from_str(&text).map_err(|e| Error::InvalidConfig(e.to_string()).in_file(path))
    }

    /// Keys set in `over` replace those in `self`.
    pub fn overlay(self, over: Settings) -> Result<Settings> {
        let mut base = to_map(&self)?;
        base.extend(to_map(&over)?);
        Ok(serde_json::from_value(Value::Object(base))?)
    }

    pub fn resolve(self) -> Result<RunConfig> {
        let profile = self.profile.unwrap_or_default();
        let dims = profile.dims();
        let defaults = profile.train_config();
        let train = TrainConfig {
            batch_size: self.batch_size.unwrap_or(defaults.batch_size),
            learning_rate: self.learning_rate.unwrap_or(defaults.learning_rate),
            beta1: self.beta1.unwrap_or(defaults.beta1),
            beta2: self.beta2.unwrap_or(defaults.beta2),
            epsilon: self.epsilon.unwrap_or(defaults.epsilon),
            clip_norm: self.clip_norm.unwrap_or(defaults.clip_norm),
            clip_mode: self.clip_mode.unwrap_or(defaults.clip_mode),
            spatial_dropout: self.spatial_dropout.unwrap_or(defaults.spatial_dropout),
            capsule_dropout: self.capsule_dropout.unwrap_or(defaults.capsule_dropout),
            noise_std: self.noise_std.unwrap_or(defaults.noise_std),
            noise_site: self.noise_site.unwrap_or(defaults.noise_site),
            max_epochs: self.max_epochs.unwrap_or(defaults.max_epochs),
            patience: self.patience.unwrap_or(defaults.patience),
            seed: self.seed.unwrap_or(defaults.seed),
            workers: self.workers.unwrap_or(defaults.workers),
            freeze_embeddings: self.freeze_embeddings.unwrap_or(defaults.freeze_embeddings),
            record_time: self.record_time.unwrap_or(defaults.record_time),
        };
        train.validate()?;
        let format = match &self.embeddings_format {
            Some(f) => f.parse::<Word2VecFormat>()?,
            None => Word2VecFormat::Binary,
        };
        let run = RunConfig {
            profile,
            embed_dim: self.embed_dim.unwrap_or(dims.embed_dim),
            embed_dim_explicit: self.embed_dim.is_some(),
            hidden_dim: self.hidden_dim.unwrap_or(dims.hidden_dim),
            num_capsules: self.num_capsules.unwrap_or(dims.num_capsules),
            capsule_dim: self.capsule_dim.unwrap_or(dims.capsule_dim),
            routing_iters: self.routing_iters.unwrap_or(dims.routing_iters),
            dense_bias: self.dense_bias.unwrap_or(true),
            min_count: self.min_count.unwrap_or(1),
            embeddings_format: format,
            train,
            settings: self,
        };
        run.model_config(1).validate()?;
        Ok(run)
    }
}

fn to_map(s: &Settings) -> Result<Map<String, Value>> {
    match serde_json::to_value(s)? {
        Value::Object(m) => Ok(m),
        _ => unreachable!("settings serialize to an object"),
    }
}

/// Fully resolved configuration for one subcommand.
#[derive(Clone, Debug)]
pub struct RunConfig {
    pub profile: Profile,
    pub embed_dim: usize,
    pub embed_dim_explicit: bool,
    pub hidden_dim: usize,
    pub num_capsules: usize,
    pub capsule_dim: usize,
    pub routing_iters: usize,
    pub dense_bias: bool,
    pub min_count: usize,
    pub embeddings_format: Word2VecFormat,
    pub train: TrainConfig,
    /// The merged raw settings, for paths and logging.
    pub settings: Settings,
}

impl RunConfig {
    pub fn model_config(&self, vocab_size: usize) -> ModelConfig {
        ModelConfig {
            vocab_size,
            embed_dim: self.embed_dim,
            hidden_dim: self.hidden_dim,
            num_capsules: self.num_capsules,
            capsule_dim: self.capsule_dim,
            routing_iters: self.routing_iters,
            num_classes: emocaps::nncore::NUM_CLASSES,
            dense_bias: self.dense_bias,
        }
    }

    /// `settings.<key>`, or an error naming the flag to set.
    pub fn require<'a>(&self, value: &'a Option<PathBuf>, key: &str, command: &str) -> Result<&'a Path> {
        value.as_deref().ok_or_else(|| {
            Error::InvalidConfig(format!(
                "`{command}` needs --{key} (or \"{key}\" in the config file)"
            ))
        })
    }

    /// Hyperparameters recorded in checkpoint manifests.
    pub fn hyperparameters(&self) -> Value {
        let mut v = serde_json::to_value(&self.train).expect("train config serializes");
        if let Value::Object(m) = &mut v {
            m.insert("profile".into(), Value::String(self.profile.to_string()));
            m.insert("min_count".into(), self.min_count.into());
            // wall-clock recording is not a hyperparameter
            m.remove("record_time");
            m.remove("workers");
        }
        v
    }
}
