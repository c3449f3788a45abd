//! Dense classification head: `y = W c + b`, `f = softmax(y)`, `argmax f`.

use rand::Rng;

use super::init::glorot_uniform;
use super::TensorView;
use crate::error::{Error, Result};
use crate::linalg::{softmax, Matrix};

pub const NUM_CLASSES: usize = 6;

#[derive(Clone, Debug, PartialEq)]
pub struct DenseParams {
    /// `classes × d_c`
    pub weight: Matrix,
    pub bias: Vec<f64>,
    /// When false the bias stays at zero and receives no gradient.
    pub use_bias: bool,
}

impl DenseParams {
    pub fn zeros(d_c: usize, classes: usize, use_bias: bool) -> Self {
        DenseParams {
            weight: Matrix::zeros(classes, d_c),
            bias: vec![0.0; classes],
            use_bias,
        }
    }

    pub fn init(d_c: usize, classes: usize, use_bias: bool, rng: &mut impl Rng) -> Self {
        DenseParams {
            weight: glorot_uniform(classes, d_c, rng),
            bias: vec![0.0; classes],
            use_bias,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.weight.cols()
    }

    pub fn classes(&self) -> usize {
        self.weight.rows()
    }

    pub fn logits(&self, c: &[f64]) -> Result<Vec<f64>> {
        if c.len() != self.input_dim() {
            return Err(Error::shape("dense layer input", self.input_dim(), c.len()));
        }
        let mut y = self.weight.matvec(c);
        if self.use_bias {
            crate::linalg::add_assign(&mut y, &self.bias);
        }
        Ok(y)
    }

    pub fn tensors(&self, prefix: &str) -> Vec<TensorView<'_>> {
        vec![
            TensorView::new(prefix, "weight", self.weight.shape().to_vec(), self.weight.as_slice()),
            TensorView::new(prefix, "bias", vec![self.bias.len()], &self.bias),
        ]
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        vec![self.weight.as_mut_slice(), &mut self.bias]
    }
}

/// Returns `(probabilities, logits)`. Uses the standard positive-exponent,
/// max-shifted softmax so that the most probable class is the largest logit.
pub fn dense_softmax_forward(c: &[f64], p: &DenseParams) -> Result<(Vec<f64>, Vec<f64>)> {
    let y = p.logits(c)?;
    Ok((softmax(&y), y))
}

/// Given `dL/dy`, accumulates parameter gradients and returns `dL/dc`.
pub fn dense_backward(
    grad_logits: &[f64],
    c: &[f64],
    p: &DenseParams,
    grads: &mut DenseParams,
) -> Result<Vec<f64>> {
    if grad_logits.len() != p.classes() || c.len() != p.input_dim() {
        return Err(Error::shape(
            "dense_backward",
            format!("{} logits, {} inputs", p.classes(), p.input_dim()),
            format!("{} logits, {} inputs", grad_logits.len(), c.len()),
        ));
    }
    grads.weight.add_outer(grad_logits, c);
    if p.use_bias {
        crate::linalg::add_assign(&mut grads.bias, grad_logits);
    }
    let mut grad_c = vec![0.0; p.input_dim()];
    p.weight.matvec_t_acc(grad_logits, &mut grad_c);
    Ok(grad_c)
}

/// Index of the largest probability; ties go to the lowest index.
pub fn predict_class(f: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in f.iter().enumerate().skip(1) {
        if v > f[best] {
            best = i;
        }
    }
    best
}
