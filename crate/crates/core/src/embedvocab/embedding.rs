use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::vocab::{Vocabulary, PAD_ID};
use super::word2vec::RawEmbeddings;
use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// Half-width of the uniform distribution used for rows without a
/// pretrained vector.
pub const OOV_INIT_RANGE: f64 = 0.05;

/// The `|V| × d` embedding matrix. Row `PAD_ID` is all zeros.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingTable {
    pub weights: Matrix,
}

impl EmbeddingTable {
    pub fn zeros(vocab_size: usize, dim: usize) -> Self {
        EmbeddingTable {
            weights: Matrix::zeros(vocab_size, dim),
        }
    }

    pub fn vocab_size(&self) -> usize {
        self.weights.rows()
    }

    pub fn dim(&self) -> usize {
        self.weights.cols()
    }

    pub fn row(&self, id: usize) -> &[f64] {
        self.weights.row(id)
    }

    /// Forces the padding row back to zero.
    pub fn clear_pad(&mut self) {
        if self.vocab_size() > PAD_ID {
            self.weights.row_mut(PAD_ID).fill(0.0);
        }
    }
}

/// Builds the embedding matrix for `vocab`.
///
/// Words found in `pretrained` copy their vector. Every other row except
/// `<pad>` is drawn i.i.d. from `U[-0.05, 0.05]` using a generator seeded
/// with `seed`, visiting rows in id order.
pub fn build_embedding(
    vocab: &Vocabulary,
    pretrained: Option<&RawEmbeddings>,
    dim: usize,
    seed: u64,
) -> Result<EmbeddingTable> {
    if vocab.is_empty() {
        return Err(Error::InvalidConfig("vocabulary is empty".into()));
    }
    if let Some(raw) = pretrained {
        if raw.dim() != dim {
            return Err(Error::DimensionMismatch {
                context: "pretrained embeddings vs configured embedding dimension".into(),
                expected: dim,
                found: raw.dim(),
            });
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut table = EmbeddingTable::zeros(vocab.len(), dim);
    for (id, word) in vocab.words().iter().enumerate() {
        if id == PAD_ID {
            continue;
        }
        let row = table.weights.row_mut(id);
        match pretrained.and_then(|raw| raw.get(word)) {
            Some(v) => row.copy_from_slice(v),
            None => row
                .iter_mut()
                .for_each(|x| *x = rng.gen_range(-OOV_INIT_RANGE..=OOV_INIT_RANGE)),
        }
    }
    Ok(table)
}

/// Gathers rows of the embedding matrix: row `t` of the result is row
/// `ids[t]` of `table`. This is the one-hot product `S · W_e`.
pub fn embed(ids: &[usize], table: &EmbeddingTable) -> Result<Matrix> {
    let dim = table.dim();
    let mut out = Matrix::zeros(ids.len(), dim);
    for (t, &id) in ids.iter().enumerate() {
        if id >= table.vocab_size() {
            return Err(Error::IdOutOfRange {
                id,
                size: table.vocab_size(),
            });
        }
        out.row_mut(t).copy_from_slice(table.row(id));
    }
    Ok(out)
}

/// Scatters `grad_out` (same shape as the output of [`embed`]) into
/// `grad_table`, accumulating rows for repeated ids.
pub fn embed_backward(ids: &[usize], grad_out: &Matrix, grad_table: &mut Matrix) -> Result<()> {
    if grad_out.rows() != ids.len() || grad_out.cols() != grad_table.cols() {
        return Err(Error::shape(
            "embed_backward",
            format!("{}x{}", ids.len(), grad_table.cols()),
            format!("{}x{}", grad_out.rows(), grad_out.cols()),
        ));
    }
    for (t, &id) in ids.iter().enumerate() {
        if id >= grad_table.rows() {
            return Err(Error::IdOutOfRange {
                id,
                size: grad_table.rows(),
            });
        }
        crate::linalg::add_assign(grad_table.row_mut(id), grad_out.row(t));
    }
    Ok(())
}
