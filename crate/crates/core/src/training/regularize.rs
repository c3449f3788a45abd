use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::linalg::Matrix;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Where the second Gaussian-noise site sits: on the flattened capsule
/// output (before the dense layer) or on the dense logits.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseSite {
    #[default]
    Capsule,
    Logits,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Regularization {
    pub spatial_dropout: f64,
    pub capsule_dropout: f64,
    pub noise_std: f64,
    pub noise_site: NoiseSite,
}

impl Regularization {
    pub fn none() -> Self {
        Regularization {
            spatial_dropout: 0.0,
            capsule_dropout: 0.0,
            noise_std: 0.0,
            noise_site: NoiseSite::Capsule,
        }
    }
}

/// Adds i.i.d. `N(0, std²)` noise in train mode. Identity in eval mode or
/// when `std == 0`, and then draws nothing from `rng`.
pub fn gaussian_noise(x: &mut [f64], std: f64, mode: Mode, rng: &mut impl Rng) {
    if mode == Mode::Eval || std == 0.0 {
        return;
    }
    let normal = Normal::new(0.0, std).expect("noise std is finite and non-negative");
    for v in x {
        *v += normal.sample(rng);
    }
}

/// Inverted-dropout mask: each entry is 0 with probability `rate`, else
/// `1 / (1 - rate)`. `None` means identity.
pub fn dropout_mask(len: usize, rate: f64, mode: Mode, rng: &mut impl Rng) -> Option<Vec<f64>> {
    if mode == Mode::Eval || rate == 0.0 {
        return None;
    }
    let keep = 1.0 / (1.0 - rate);
    Some(
        (0..len)
            .map(|_| if rng.gen::<f64>() < rate { 0.0 } else { keep })
            .collect(),
    )
}

/// Element-wise dropout; returns the mask for the backward pass.
pub fn dropout(x: &mut [f64], rate: f64, mode: Mode, rng: &mut impl Rng) -> Option<Vec<f64>> {
    let mask = dropout_mask(x.len(), rate, mode, rng)?;
    apply_mask(x, &mask);
    Some(mask)
}

/// Drops whole columns (embedding channels) of `x` across every row.
/// Returns the per-channel mask.
pub fn spatial_dropout(x: &mut Matrix, rate: f64, mode: Mode, rng: &mut impl Rng) -> Option<Vec<f64>> {
    let mask = dropout_mask(x.cols(), rate, mode, rng)?;
    apply_channel_mask(x, &mask);
    Some(mask)
}

pub fn apply_mask(x: &mut [f64], mask: &[f64]) {
    for (v, m) in x.iter_mut().zip(mask) {
        *v *= m;
    }
}

pub fn apply_channel_mask(x: &mut Matrix, mask: &[f64]) {
    for r in 0..x.rows() {
        apply_mask(x.row_mut(r), mask);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identities() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let orig = vec![1.0, -2.0, 3.0];
        let mut x = orig.clone();
        gaussian_noise(&mut x, 0.5, Mode::Eval, &mut rng);
        gaussian_noise(&mut x, 0.0, Mode::Train, &mut rng);
        assert!(dropout(&mut x, 0.0, Mode::Train, &mut rng).is_none());
        assert!(dropout(&mut x, 0.5, Mode::Eval, &mut rng).is_none());
        assert_eq!(x, orig);
        let mut m = Matrix::from_rows(&[orig.clone()]).unwrap();
        assert!(spatial_dropout(&mut m, 0.3, Mode::Eval, &mut rng).is_none());
        assert_eq!(m.row(0), orig.as_slice());
    }

    #[test]
    fn noise_has_requested_spread() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let mut x = vec![0.0; 1_000_000];
        gaussian_noise(&mut x, 0.1, Mode::Train, &mut rng);
        let n = x.len() as f64;
        let mean = x.iter().sum::<f64>() / n;
        let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
        assert!((var.sqrt() - 0.1).abs() < 0.002, "std {}", var.sqrt());
        assert!(mean.abs() < 0.001);
    }

    #[test]
    fn dropout_preserves_expectation() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let trials = 100_000;
        let mut acc = 0.0;
        for _ in 0..trials {
            let mut x = [2.5];
            dropout(&mut x, 0.25, Mode::Train, &mut rng);
            acc += x[0];
        }
        let mean = acc / trials as f64;
        assert!((mean - 2.5).abs() / 2.5 < 0.01, "mean {mean}");
    }

    proptest! {
        #[test]
        fn spatial_mask_drops_whole_channels(
            seed in any::<u64>(),
            rows in 1usize..12,
            cols in 1usize..12,
            rate in 0.05f64..0.9,
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let data: Vec<f64> = (0..rows * cols).map(|k| 1.0 + k as f64).collect();
            let mut x = Matrix::from_vec(rows, cols, data.clone()).unwrap();
            let mask = spatial_dropout(&mut x, rate, Mode::Train, &mut rng).unwrap();
            for c in 0..cols {
                for r in 0..rows {
                    let v = x.get(r, c);
                    if mask[c] == 0.0 {
                        prop_assert_eq!(v, 0.0);
                    } else {
                        prop_assert!((v - data[r * cols + c] / (1.0 - rate)).abs() < 1e-9);
                    }
                }
            }
        }
    }
}
