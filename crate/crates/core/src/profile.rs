//! Named size presets.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::nncore::NUM_CLASSES;
use crate::training::{ModelConfig, TrainConfig};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Profile {
    /// 300-d word2vec input, 128 GRU cells per direction, 16 capsules of 32, batch 512.
    Paper,
    /// 50-d embeddings (random unless word2vec is supplied), 32 GRU cells,
    /// 8 capsules of 8, batch 32.
    #[default]
    Desk,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Dims {
    pub embed_dim: usize,
    pub hidden_dim: usize,
    pub num_capsules: usize,
    pub capsule_dim: usize,
    pub routing_iters: usize,
    pub batch_size: usize,
}

impl Profile {
    pub fn dims(self) -> Dims {
        match self {
            Profile::Paper => Dims {
                embed_dim: 300,
                hidden_dim: 128,
                num_capsules: 16,
                capsule_dim: 32,
                routing_iters: 5,
                batch_size: 512,
            },
            Profile::Desk => Dims {
                embed_dim: 50,
                hidden_dim: 32,
                num_capsules: 8,
                capsule_dim: 8,
                routing_iters: 5,
                batch_size: 32,
            },
        }
    }

    pub fn model_config(self, vocab_size: usize) -> ModelConfig {
        let d = self.dims();
        ModelConfig {
            vocab_size,
            embed_dim: d.embed_dim,
            hidden_dim: d.hidden_dim,
            num_capsules: d.num_capsules,
            capsule_dim: d.capsule_dim,
            routing_iters: d.routing_iters,
            num_classes: NUM_CLASSES,
            dense_bias: true,
        }
    }

    pub fn train_config(self) -> TrainConfig {
        TrainConfig {
            batch_size: self.dims().batch_size,
            ..TrainConfig::default()
        }
    }
}

impl fmt::Display for Profile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Profile::Paper => "paper",
            Profile::Desk => "desk",
        })
    }
}

impl FromStr for Profile {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "paper" => Ok(Profile::Paper),
            "desk" => Ok(Profile::Desk),
            other => Err(format!("unknown profile {other:?} (expected paper or desk)")),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Matrix;
    use crate::training::ModelParams;

    #[test]
    fn full_profile_shapes_compose() {
        let cfg = Profile::Paper.model_config(20);
        assert_eq!(cfg.encoder_dim(), 256);
        assert_eq!(cfg.feature_dim(), 512);
        let p = ModelParams::zeros(&cfg);
        assert_eq!(p.embedding.weights.shape(), [20, 300]);
        assert_eq!(p.capsule.input_dim(), 256);
        assert_eq!(p.dense.weight.shape(), Matrix::zeros(6, 512).shape());
        assert_eq!(Profile::Paper.train_config().batch_size, 512);
    }

    #[test]
    fn parses_names() {
        assert_eq!("DESK".parse::<Profile>(), Ok(Profile::Desk));
        assert!("laptop".parse::<Profile>().is_err());
        assert_eq!(Profile::Paper.to_string(), "paper");
    }
}
