//! Numeric building blocks: the GRU cell and bidirectional encoder, the dense
//! softmax head, initialization and the finite-difference gradient checker.

mod dense;
mod gradcheck;
mod gru;
mod init;

pub use dense::{
    dense_backward, dense_softmax_forward, predict_class, DenseParams, NUM_CLASSES,
};
pub use gradcheck::{finite_diff_check, relative_error, REL_ERR_FLOOR};
pub use gru::{
    bigru_backward, bigru_forward, gru_cell_backward, gru_cell_forward, BiGruCache, GruParams,
    GruStep,
};
pub use init::glorot_uniform;

/// A read-only view of one named parameter tensor.
#[derive(Clone, Debug)]
pub struct TensorView<'a> {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: &'a [f64],
}

impl<'a> TensorView<'a> {
    pub(crate) fn new(prefix: &str, name: &str, shape: Vec<usize>, data: &'a [f64]) -> Self {
        let name = if prefix.is_empty() {
            name.to_string()
        } else {
            format!("{prefix}.{name}")
        };
        TensorView { name, shape, data }
    }
}
