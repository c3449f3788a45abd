//! Capsule layer with dynamic routing over a variable-length sequence.
//!
//! Each output capsule `j` owns one transform `W_j` shared by every input
//! position, giving prediction vectors `û_{j|i} = W_j h_i`. Routing then runs
//! for a fixed number of iterations:
//!
//! ```text
//! b_ij = 0
//! repeat r times:
//!     c_i· = softmax_j(b_i·)
//!     s_j  = Σ_i c_ij û_{j|i}
//!     v_j  = squash(s_j)
//!     b_ij += û_{j|i} · v_j        (skipped after the last iteration)
//! ```
//!
//! The backward pass differentiates through every iteration, including the
//! coupling softmaxes and the agreement updates.

use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::{add_assign, axpy, dot, softmax, Matrix};
use crate::nncore::{glorot_uniform, TensorView};

#[derive(Clone, Debug, PartialEq)]
pub struct CapsuleParams {
    /// One `d_out × d_in` transform per output capsule.
    pub weights: Vec<Matrix>,
}

impl CapsuleParams {
    pub fn zeros(d_in: usize, num_capsules: usize, capsule_dim: usize) -> Self {
        CapsuleParams {
            weights: vec![Matrix::zeros(capsule_dim, d_in); num_capsules],
        }
    }

    pub fn init(d_in: usize, num_capsules: usize, capsule_dim: usize, rng: &mut impl Rng) -> Self {
        CapsuleParams {
            weights: (0..num_capsules)
                .map(|_| glorot_uniform(capsule_dim, d_in, rng))
                .collect(),
        }
    }

    pub fn num_capsules(&self) -> usize {
        self.weights.len()
    }

    pub fn capsule_dim(&self) -> usize {
        self.weights.first().map_or(0, Matrix::rows)
    }

    pub fn input_dim(&self) -> usize {
        self.weights.first().map_or(0, Matrix::cols)
    }

    /// Flattened output width `J · d_out`.
    pub fn output_dim(&self) -> usize {
        self.num_capsules() * self.capsule_dim()
    }

    pub fn tensors(&self, prefix: &str) -> Vec<TensorView<'_>> {
        self.weights
            .iter()
            .enumerate()
            .map(|(j, w)| TensorView::new(prefix, &format!("w{j}"), w.shape().to_vec(), w.as_slice()))
            .collect()
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        self.weights.iter_mut().map(Matrix::as_mut_slice).collect()
    }
}

/// Prediction vectors `û_{j|i}`, laid out `[i][j][k]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Predictions {
    inputs: usize,
    capsules: usize,
    dim: usize,
    data: Vec<f64>,
}

impl Predictions {
    pub fn zeros(inputs: usize, capsules: usize, dim: usize) -> Self {
        Predictions {
            inputs,
            capsules,
            dim,
            data: vec![0.0; inputs * capsules * dim],
        }
    }

    pub fn inputs(&self) -> usize {
        self.inputs
    }

    pub fn capsules(&self) -> usize {
        self.capsules
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> &[f64] {
        let off = (i * self.capsules + j) * self.dim;
        &self.data[off..off + self.dim]
    }

    #[inline]
    pub fn get_mut(&mut self, i: usize, j: usize) -> &mut [f64] {
        let off = (i * self.capsules + j) * self.dim;
        &mut self.data[off..off + self.dim]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// Builds predictions from nested `[i][j]` vectors.
    pub fn from_nested(u: &[Vec<Vec<f64>>]) -> Result<Self> {
        let inputs = u.len();
        let capsules = u.first().map_or(0, Vec::len);
        let dim = u.first().and_then(|r| r.first()).map_or(0, Vec::len);
        let mut p = Predictions::zeros(inputs, capsules, dim);
        for (i, row) in u.iter().enumerate() {
            if row.len() != capsules {
                return Err(Error::shape("Predictions::from_nested", capsules, row.len()));
            }
            for (j, v) in row.iter().enumerate() {
                if v.len() != dim {
                    return Err(Error::shape("Predictions::from_nested", dim, v.len()));
                }
                p.get_mut(i, j).copy_from_slice(v);
            }
        }
        Ok(p)
    }
}

/// `û_{j|i} = W_j h_i` for every row `h_i` of `h`.
pub fn predict_vectors(h: &Matrix, p: &CapsuleParams) -> Result<Predictions> {
    if h.rows() == 0 {
        return Err(Error::EmptySequence);
    }
    if h.cols() != p.input_dim() {
        return Err(Error::shape("predict_vectors", p.input_dim(), h.cols()));
    }
    let mut u = Predictions::zeros(h.rows(), p.num_capsules(), p.capsule_dim());
    for i in 0..h.rows() {
        for (j, w) in p.weights.iter().enumerate() {
            w.matvec_acc(h.row(i), u.get_mut(i, j));
        }
    }
    Ok(u)
}

/// Accumulates `dW_j += Σ_i dû_{j|i} h_iᵀ` and returns `dH`.
pub fn predict_vectors_backward(
    grad_u: &Predictions,
    h: &Matrix,
    p: &CapsuleParams,
    grads: &mut CapsuleParams,
) -> Result<Matrix> {
    if grad_u.inputs() != h.rows()
        || grad_u.capsules() != p.num_capsules()
        || grad_u.dim() != p.capsule_dim()
    {
        return Err(Error::shape(
            "predict_vectors_backward",
            format!("{}x{}x{}", h.rows(), p.num_capsules(), p.capsule_dim()),
            format!("{}x{}x{}", grad_u.inputs(), grad_u.capsules(), grad_u.dim()),
        ));
    }
    let mut grad_h = Matrix::zeros(h.rows(), h.cols());
    for i in 0..h.rows() {
        for (j, (w, gw)) in p.weights.iter().zip(grads.weights.iter_mut()).enumerate() {
            let gu = grad_u.get(i, j);
            gw.add_outer(gu, h.row(i));
            w.matvec_t_acc(gu, grad_h.row_mut(i));
        }
    }
    Ok(grad_h)
}

/// `v = (‖s‖² / (1 + ‖s‖²)) · s / ‖s‖`, with `squash(0) = 0`.
pub fn squash(s: &[f64]) -> Vec<f64> {
    let q = dot(s, s);
    if q == 0.0 {
        return vec![0.0; s.len()];
    }
    let norm = q.sqrt();
    let factor = norm / (1.0 + q);
    s.iter().map(|x| x * factor).collect()
}

/// Vector-Jacobian product of [`squash`] at `s`. The gradient at `s = 0` is 0.
pub fn squash_backward(s: &[f64], grad_v: &[f64]) -> Vec<f64> {
    let q = dot(s, s);
    if q == 0.0 {
        return vec![0.0; s.len()];
    }
    let norm = q.sqrt();
    let f = norm / (1.0 + q);
    // d/ds [f(q) s] = f I + 2 f'(q) s sᵀ, with 2 f'(q) = (1 - q) / (‖s‖ (1 + q)²)
    let radial = (1.0 - q) / (norm * (1.0 + q) * (1.0 + q)) * dot(s, grad_v);
    s.iter()
        .zip(grad_v)
        .map(|(si, gi)| f * gi + radial * si)
        .collect()
}

/// Per-iteration routing intermediates.
#[derive(Clone, Debug)]
pub struct RoutingState {
    /// `b` at the start of each iteration (`n × J`).
    pub logits: Vec<Matrix>,
    /// `c = softmax_j(b)` for each iteration (`n × J`).
    pub couplings: Vec<Matrix>,
    /// `s_j` per iteration (`J × d_out`).
    pub totals: Vec<Matrix>,
    /// `v_j = squash(s_j)` per iteration (`J × d_out`).
    pub outputs: Vec<Matrix>,
}

impl RoutingState {
    pub fn iterations(&self) -> usize {
        self.outputs.len()
    }
}

/// Runs `iterations` rounds of routing-by-agreement and returns the final
/// output capsules `V` (`J × d_out`) together with every intermediate.
pub fn dynamic_routing(u: &Predictions, iterations: usize) -> Result<(Matrix, RoutingState)> {
    if iterations == 0 {
        return Err(Error::InvalidConfig("routing needs at least one iteration".into()));
    }
    let (n, caps, dim) = (u.inputs(), u.capsules(), u.dim());
    let mut state = RoutingState {
        logits: Vec::with_capacity(iterations),
        couplings: Vec::with_capacity(iterations),
        totals: Vec::with_capacity(iterations),
        outputs: Vec::with_capacity(iterations),
    };
    let mut b = Matrix::zeros(n, caps);

    for it in 0..iterations {
        let mut c = Matrix::zeros(n, caps);
        for i in 0..n {
            c.row_mut(i).copy_from_slice(&softmax(b.row(i)));
        }

        let mut s = Matrix::zeros(caps, dim);
        for i in 0..n {
            for j in 0..caps {
                axpy(c.get(i, j), u.get(i, j), s.row_mut(j));
            }
        }

        let mut v = Matrix::zeros(caps, dim);
        for j in 0..caps {
            v.row_mut(j).copy_from_slice(&squash(s.row(j)));
        }

        let next_b = if it + 1 < iterations {
            let mut nb = b.clone();
            for i in 0..n {
                for j in 0..caps {
                    let agreement = dot(u.get(i, j), v.row(j));
                    nb.set(i, j, nb.get(i, j) + agreement);
                }
            }
            Some(nb)
        } else {
            None
        };

        state.logits.push(b);
        state.couplings.push(c);
        state.totals.push(s);
        state.outputs.push(v);
        if let Some(nb) = next_b {
            b = nb;
        } else {
            break;
        }
    }

    let v = state.outputs.last().expect("at least one iteration").clone();
    Ok((v, state))
}

/// Gradient of the routing output w.r.t. the prediction vectors, through
/// all iterations.
pub fn routing_backward(grad_v: &Matrix, u: &Predictions, state: &RoutingState) -> Result<Predictions> {
    let (n, caps, dim) = (u.inputs(), u.capsules(), u.dim());
    if grad_v.rows() != caps || grad_v.cols() != dim {
        return Err(Error::shape(
            "routing_backward",
            format!("{caps}x{dim}"),
            format!("{}x{}", grad_v.rows(), grad_v.cols()),
        ));
    }
    let iterations = state.iterations();
    let mut grad_u = Predictions::zeros(n, caps, dim);
    // gradient w.r.t. the logits produced by the iteration being unwound
    let mut grad_b_next: Option<Matrix> = None;

    for it in (0..iterations).rev() {
        let c = &state.couplings[it];
        let s = &state.totals[it];
        let v = &state.outputs[it];

        let mut grad_out = match it + 1 == iterations {
            true => grad_v.clone(),
            false => Matrix::zeros(caps, dim),
        };
        // b_next = b + û·v feeds back into v and û
        let mut grad_b = match &grad_b_next {
            Some(gbn) => {
                for i in 0..n {
                    for j in 0..caps {
                        let g = gbn.get(i, j);
                        if g != 0.0 {
                            axpy(g, u.get(i, j), grad_out.row_mut(j));
                            axpy(g, v.row(j), grad_u.get_mut(i, j));
                        }
                    }
                }
                gbn.clone()
            }
            None => Matrix::zeros(n, caps),
        };

        let mut grad_s = Matrix::zeros(caps, dim);
        for j in 0..caps {
            grad_s
                .row_mut(j)
                .copy_from_slice(&squash_backward(s.row(j), grad_out.row(j)));
        }

        for i in 0..n {
            let mut grad_c = vec![0.0; caps];
            for j in 0..caps {
                axpy(c.get(i, j), grad_s.row(j), grad_u.get_mut(i, j));
                grad_c[j] = dot(u.get(i, j), grad_s.row(j));
            }
            let gb = crate::linalg::softmax_backward(c.row(i), &grad_c);
            add_assign(grad_b.row_mut(i), &gb);
        }

        grad_b_next = Some(grad_b);
    }
    Ok(grad_u)
}

/// Intermediates of [`capsule_layer`].
#[derive(Clone, Debug)]
pub struct CapsuleCache {
    pub input: Matrix,
    pub predictions: Predictions,
    pub routing: RoutingState,
}

/// Prediction, routing and row-major flattening of the output capsules into
/// a vector of length `J · d_out`.
pub fn capsule_layer(
    h: &Matrix,
    p: &CapsuleParams,
    iterations: usize,
) -> Result<(Vec<f64>, CapsuleCache)> {
    let u = predict_vectors(h, p)?;
    let (v, routing) = dynamic_routing(&u, iterations)?;
    let cache = CapsuleCache {
        input: h.clone(),
        predictions: u,
        routing,
    };
    Ok((v.into_vec(), cache))
}

/// Backward pass of [`capsule_layer`]: accumulates `dW` into `grads` and
/// returns `dH`.
pub fn capsule_backward(
    grad_c: &[f64],
    cache: &CapsuleCache,
    p: &CapsuleParams,
    grads: &mut CapsuleParams,
) -> Result<Matrix> {
    let grad_v = Matrix::from_vec(p.num_capsules(), p.capsule_dim(), grad_c.to_vec())
        .map_err(|_| Error::shape("capsule_backward", p.output_dim(), grad_c.len()))?;
    let grad_u = routing_backward(&grad_v, &cache.predictions, &cache.routing)?;
    predict_vectors_backward(&grad_u, &cache.input, p, grads)
}
