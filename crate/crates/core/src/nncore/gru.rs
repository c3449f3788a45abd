//! Gated recurrent unit and the bidirectional encoder built from it.
//!
//! Gate equations, per timestep:
//!
//! ```text
//! r = σ(W_ir x + b_ir + W_hr h' + b_hr)
//! z = σ(W_iz x + b_iz + W_hz h' + b_hz)
//! n = tanh(W_in x + b_in + r ⊙ (W_hn h' + b_hn))
//! h = (1 - z) ⊙ n + z ⊙ h'
//! ```
//!
//! where `h'` is the previous hidden state. The reset gate multiplies the
//! already-biased recurrent term.

use rand::Rng;

use super::init::glorot_uniform;
use super::TensorView;
use crate::error::{Error, Result};
use crate::linalg::{sigmoid, Matrix};

/// Weights are stored output-major: input matrices are `d_h × d_in` and
/// recurrent matrices `d_h × d_h`, so a gate pre-activation is `W · x`.
#[derive(Clone, Debug, PartialEq)]
pub struct GruParams {
    pub w_ir: Matrix,
    pub w_iz: Matrix,
    pub w_in: Matrix,
    pub w_hr: Matrix,
    pub w_hz: Matrix,
    pub w_hn: Matrix,
    pub b_ir: Vec<f64>,
    pub b_iz: Vec<f64>,
    pub b_in: Vec<f64>,
    pub b_hr: Vec<f64>,
    pub b_hz: Vec<f64>,
    pub b_hn: Vec<f64>,
}

impl GruParams {
    pub fn zeros(d_in: usize, d_h: usize) -> Self {
        GruParams {
            w_ir: Matrix::zeros(d_h, d_in),
            w_iz: Matrix::zeros(d_h, d_in),
            w_in: Matrix::zeros(d_h, d_in),
            w_hr: Matrix::zeros(d_h, d_h),
            w_hz: Matrix::zeros(d_h, d_h),
            w_hn: Matrix::zeros(d_h, d_h),
            b_ir: vec![0.0; d_h],
            b_iz: vec![0.0; d_h],
            b_in: vec![0.0; d_h],
            b_hr: vec![0.0; d_h],
            b_hz: vec![0.0; d_h],
            b_hn: vec![0.0; d_h],
        }
    }

    /// Glorot-uniform weights, zero biases.
    pub fn init(d_in: usize, d_h: usize, rng: &mut impl Rng) -> Self {
        GruParams {
            w_ir: glorot_uniform(d_h, d_in, rng),
            w_iz: glorot_uniform(d_h, d_in, rng),
            w_in: glorot_uniform(d_h, d_in, rng),
            w_hr: glorot_uniform(d_h, d_h, rng),
            w_hz: glorot_uniform(d_h, d_h, rng),
            w_hn: glorot_uniform(d_h, d_h, rng),
            ..GruParams::zeros(d_in, d_h)
        }
    }

    pub fn input_dim(&self) -> usize {
        self.w_ir.cols()
    }

    pub fn hidden_dim(&self) -> usize {
        self.w_ir.rows()
    }

    pub fn tensors(&self, prefix: &str) -> Vec<TensorView<'_>> {
        fn mat<'a>(prefix: &str, name: &str, m: &'a Matrix) -> TensorView<'a> {
            TensorView::new(prefix, name, m.shape().to_vec(), m.as_slice())
        }
        fn vec<'a>(prefix: &str, name: &str, v: &'a [f64]) -> TensorView<'a> {
            TensorView::new(prefix, name, vec![v.len()], v)
        }
        vec![
            mat(prefix, "w_ir", &self.w_ir),
            mat(prefix, "w_iz", &self.w_iz),
            mat(prefix, "w_in", &self.w_in),
            mat(prefix, "w_hr", &self.w_hr),
            mat(prefix, "w_hz", &self.w_hz),
            mat(prefix, "w_hn", &self.w_hn),
            vec(prefix, "b_ir", &self.b_ir),
            vec(prefix, "b_iz", &self.b_iz),
            vec(prefix, "b_in", &self.b_in),
            vec(prefix, "b_hr", &self.b_hr),
            vec(prefix, "b_hz", &self.b_hz),
            vec(prefix, "b_hn", &self.b_hn),
        ]
    }

    /// Mutable slices in the same order as [`GruParams::tensors`].
    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        vec![
            self.w_ir.as_mut_slice(),
            self.w_iz.as_mut_slice(),
            self.w_in.as_mut_slice(),
            self.w_hr.as_mut_slice(),
            self.w_hz.as_mut_slice(),
            self.w_hn.as_mut_slice(),
            &mut self.b_ir,
            &mut self.b_iz,
            &mut self.b_in,
            &mut self.b_hr,
            &mut self.b_hz,
            &mut self.b_hn,
        ]
    }
}

/// Everything one timestep's backward pass needs.
#[derive(Clone, Debug)]
pub struct GruStep {
    pub x: Vec<f64>,
    pub h_prev: Vec<f64>,
    pub r: Vec<f64>,
    pub z: Vec<f64>,
    pub n: Vec<f64>,
    /// `W_hn h' + b_hn`, before the reset gate is applied.
    pub hn: Vec<f64>,
    pub h: Vec<f64>,
}

fn check_dims(x: &[f64], h_prev: &[f64], p: &GruParams, context: &'static str) -> Result<()> {
    if x.len() != p.input_dim() {
        return Err(Error::shape(context, p.input_dim(), x.len()));
    }
    if h_prev.len() != p.hidden_dim() {
        return Err(Error::shape(context, p.hidden_dim(), h_prev.len()));
    }
    Ok(())
}

pub fn gru_cell_forward(x: &[f64], h_prev: &[f64], p: &GruParams) -> Result<(Vec<f64>, GruStep)> {
    check_dims(x, h_prev, p, "gru_cell_forward")?;
    let d_h = p.hidden_dim();

    let mut r = p.w_ir.matvec(x);
    p.w_hr.matvec_acc(h_prev, &mut r);
    let mut z = p.w_iz.matvec(x);
    p.w_hz.matvec_acc(h_prev, &mut z);
    let mut hn = p.w_hn.matvec(h_prev);
    let mut n = p.w_in.matvec(x);

    let mut h = vec![0.0; d_h];
    for k in 0..d_h {
        r[k] = sigmoid(r[k] + p.b_ir[k] + p.b_hr[k]);
        z[k] = sigmoid(z[k] + p.b_iz[k] + p.b_hz[k]);
        hn[k] += p.b_hn[k];
        n[k] = (n[k] + p.b_in[k] + r[k] * hn[k]).tanh();
        h[k] = (1.0 - z[k]) * n[k] + z[k] * h_prev[k];
    }

    let step = GruStep {
        x: x.to_vec(),
        h_prev: h_prev.to_vec(),
        r,
        z,
        n,
        hn,
        h: h.clone(),
    };
    Ok((h, step))
}

/// Backpropagates `grad_h` through one cell. Parameter gradients are
/// accumulated into `grads`; returns `(grad_x, grad_h_prev)`.
pub fn gru_cell_backward(
    grad_h: &[f64],
    step: &GruStep,
    p: &GruParams,
    grads: &mut GruParams,
) -> Result<(Vec<f64>, Vec<f64>)> {
    check_dims(&step.x, &step.h_prev, p, "gru_cell_backward")?;
    let d_h = p.hidden_dim();
    if grad_h.len() != d_h {
        return Err(Error::shape("gru_cell_backward", d_h, grad_h.len()));
    }
    if grads.hidden_dim() != d_h || grads.input_dim() != p.input_dim() {
        return Err(Error::shape(
            "gru_cell_backward gradient buffer",
            format!("{}x{}", d_h, p.input_dim()),
            format!("{}x{}", grads.hidden_dim(), grads.input_dim()),
        ));
    }

    let mut grad_h_prev = vec![0.0; d_h];
    let mut da_n = vec![0.0; d_h];
    let mut da_r = vec![0.0; d_h];
    let mut da_z = vec![0.0; d_h];
    let mut dg = vec![0.0; d_h];

    for k in 0..d_h {
        let (r, z, n) = (step.r[k], step.z[k], step.n[k]);
        let dh = grad_h[k];
        grad_h_prev[k] = dh * z;
        let dn = dh * (1.0 - z);
        let dz = dh * (step.h_prev[k] - n);
        da_n[k] = dn * (1.0 - n * n);
        let dr = da_n[k] * step.hn[k];
        dg[k] = da_n[k] * r;
        da_r[k] = dr * r * (1.0 - r);
        da_z[k] = dz * z * (1.0 - z);
    }

    let mut grad_x = vec![0.0; p.input_dim()];
    for (da, w_i, w_h, gw_i, gw_h, gb_i, gb_h) in [
        (&da_r, &p.w_ir, &p.w_hr, &mut grads.w_ir, &mut grads.w_hr, &mut grads.b_ir, &mut grads.b_hr),
        (&da_z, &p.w_iz, &p.w_hz, &mut grads.w_iz, &mut grads.w_hz, &mut grads.b_iz, &mut grads.b_hz),
    ] {
        gw_i.add_outer(da, &step.x);
        gw_h.add_outer(da, &step.h_prev);
        crate::linalg::add_assign(gb_i, da);
        crate::linalg::add_assign(gb_h, da);
        w_i.matvec_t_acc(da, &mut grad_x);
        w_h.matvec_t_acc(da, &mut grad_h_prev);
    }

    grads.w_in.add_outer(&da_n, &step.x);
    crate::linalg::add_assign(&mut grads.b_in, &da_n);
    p.w_in.matvec_t_acc(&da_n, &mut grad_x);

    grads.w_hn.add_outer(&dg, &step.h_prev);
    crate::linalg::add_assign(&mut grads.b_hn, &dg);
    p.w_hn.matvec_t_acc(&dg, &mut grad_h_prev);

    Ok((grad_x, grad_h_prev))
}

/// Per-direction step caches from [`bigru_forward`]. `backward[t]` is the
/// backward-direction step that consumed input row `t`.
#[derive(Clone, Debug)]
pub struct BiGruCache {
    pub forward: Vec<GruStep>,
    pub backward: Vec<GruStep>,
}

/// Runs a forward-time and a backward-time GRU over the rows of `x` and
/// concatenates their hidden states: row `t` of the result is
/// `[→h_t, ←h_t]`, of width `2 · d_h`.
pub fn bigru_forward(x: &Matrix, fwd: &GruParams, bwd: &GruParams) -> Result<(Matrix, BiGruCache)> {
    let n = x.rows();
    if n == 0 {
        return Err(Error::EmptySequence);
    }
    let (dh_f, dh_b) = (fwd.hidden_dim(), bwd.hidden_dim());
    let mut out = Matrix::zeros(n, dh_f + dh_b);

    let mut forward = Vec::with_capacity(n);
    let mut h = vec![0.0; dh_f];
    for t in 0..n {
        let (h_t, step) = gru_cell_forward(x.row(t), &h, fwd)?;
        out.row_mut(t)[..dh_f].copy_from_slice(&h_t);
        forward.push(step);
        h = h_t;
    }

    let mut backward: Vec<Option<GruStep>> = vec![None; n];
    let mut h = vec![0.0; dh_b];
    for t in (0..n).rev() {
        let (h_t, step) = gru_cell_forward(x.row(t), &h, bwd)?;
        out.row_mut(t)[dh_f..].copy_from_slice(&h_t);
        backward[t] = Some(step);
        h = h_t;
    }
    let backward = backward.into_iter().map(|s| s.expect("every row visited")).collect();

    Ok((out, BiGruCache { forward, backward }))
}

/// Backpropagates `grad_out` (same shape as the [`bigru_forward`] output).
/// Accumulates parameter gradients and returns the gradient w.r.t. `x`.
pub fn bigru_backward(
    grad_out: &Matrix,
    cache: &BiGruCache,
    fwd: &GruParams,
    bwd: &GruParams,
    grads_fwd: &mut GruParams,
    grads_bwd: &mut GruParams,
) -> Result<Matrix> {
    let n = cache.forward.len();
    let (dh_f, dh_b) = (fwd.hidden_dim(), bwd.hidden_dim());
    if grad_out.rows() != n || grad_out.cols() != dh_f + dh_b {
        return Err(Error::shape(
            "bigru_backward",
            format!("{}x{}", n, dh_f + dh_b),
            format!("{}x{}", grad_out.rows(), grad_out.cols()),
        ));
    }
    let mut grad_x = Matrix::zeros(n, fwd.input_dim());

    let mut carry = vec![0.0; dh_f];
    for t in (0..n).rev() {
        let mut g = grad_out.row(t)[..dh_f].to_vec();
        crate::linalg::add_assign(&mut g, &carry);
        let (gx, gh) = gru_cell_backward(&g, &cache.forward[t], fwd, grads_fwd)?;
        crate::linalg::add_assign(grad_x.row_mut(t), &gx);
        carry = gh;
    }

    let mut carry = vec![0.0; dh_b];
    for t in 0..n {
        let mut g = grad_out.row(t)[dh_f..].to_vec();
        crate::linalg::add_assign(&mut g, &carry);
        let (gx, gh) = gru_cell_backward(&g, &cache.backward[t], bwd, grads_bwd)?;
        crate::linalg::add_assign(grad_x.row_mut(t), &gx);
        carry = gh;
    }

    Ok(grad_x)
}
