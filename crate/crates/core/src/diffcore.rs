//! Dense numerics for the fixed single-hidden-layer network.
//!
//! The network is always `output = W2 · selu(W1 · input + b1) + b2`. Its
//! gradients are written out by hand for this one architecture, and the
//! optimizer is Adam applied as gradient *ascent*: callers hand it the
//! gradient of the quantity they want to maximize.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const SELU_LAMBDA: f64 = 1.0507009873554805;
pub const SELU_ALPHA: f64 = 1.6732632423543772;

#[inline]
pub fn selu(x: f64) -> f64 {
    if x > 0.0 {
        SELU_LAMBDA * x
    } else {
        SELU_LAMBDA * SELU_ALPHA * x.exp_m1()
    }
}

#[inline]
pub fn selu_grad(x: f64) -> f64 {
    if x > 0.0 {
        SELU_LAMBDA
    } else {
        SELU_LAMBDA * SELU_ALPHA * x.exp()
    }
}

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::dim("DenseMatrix::from_vec", rows * cols, data.len()));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config("matrix entries must be finite".into()));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// `out = self · x + bias`
    fn affine_into(&self, x: &[f64], bias: &[f64], out: &mut [f64]) {
        for (r, o) in out.iter_mut().enumerate() {
            *o = bias[r] + dot(self.row(r), x);
        }
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Weights of the single-hidden-layer network.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    pub w1: DenseMatrix,
    pub b1: Vec<f64>,
    pub w2: DenseMatrix,
    pub b2: Vec<f64>,
}

impl MlpParams {
    pub fn zeros(input: usize, hidden: usize, output: usize) -> Self {
        Self {
            w1: DenseMatrix::zeros(hidden, input),
            b1: vec![0.0; hidden],
            w2: DenseMatrix::zeros(output, hidden),
            b2: vec![0.0; output],
        }
    }

    /// Glorot-uniform weights for both layers, zero biases.
    pub fn glorot<R: Rng + ?Sized>(input: usize, hidden: usize, output: usize, rng: &mut R) -> Self {
        let mut p = Self::zeros(input, hidden, output);
        glorot_fill(&mut p.w1, rng);
        glorot_fill(&mut p.w2, rng);
        p
    }

    /// Glorot-uniform hidden layer with an all-zero output layer, so the
    /// network starts out as the constant zero map.
    pub fn glorot_zero_output<R: Rng + ?Sized>(
        input: usize,
        hidden: usize,
        output: usize,
        rng: &mut R,
    ) -> Self {
        let mut p = Self::zeros(input, hidden, output);
        glorot_fill(&mut p.w1, rng);
        p
    }

    /// Builds parameters from the four blocks, checking shapes.
    pub fn from_parts(w1: DenseMatrix, b1: Vec<f64>, w2: DenseMatrix, b2: Vec<f64>) -> Result<Self> {
        if b1.len() != w1.rows() {
            return Err(Error::dim("MlpParams b1", w1.rows(), b1.len()));
        }
        if w2.cols() != w1.rows() {
            return Err(Error::dim("MlpParams w2 cols", w1.rows(), w2.cols()));
        }
        if b2.len() != w2.rows() {
            return Err(Error::dim("MlpParams b2", w2.rows(), b2.len()));
        }
        if b1.iter().chain(&b2).any(|v| !v.is_finite()) {
            return Err(Error::Config("bias entries must be finite".into()));
        }
        Ok(Self { w1, b1, w2, b2 })
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.in_dim(), self.hidden_dim(), self.out_dim())
    }

    pub fn in_dim(&self) -> usize {
        self.w1.cols()
    }

    pub fn hidden_dim(&self) -> usize {
        self.w1.rows()
    }

    pub fn out_dim(&self) -> usize {
        self.w2.rows()
    }

    pub fn n_params(&self) -> usize {
        self.w1.data.len() + self.b1.len() + self.w2.data.len() + self.b2.len()
    }

    /// The parameter blocks in canonical order `w1, b1, w2, b2`.
    pub fn blocks(&self) -> [&[f64]; 4] {
        [&self.w1.data, &self.b1, &self.w2.data, &self.b2]
    }

    pub fn blocks_mut(&mut self) -> [&mut [f64]; 4] {
        [&mut self.w1.data, &mut self.b1, &mut self.w2.data, &mut self.b2]
    }

    pub fn fill(&mut self, value: f64) {
        for block in self.blocks_mut() {
            block.iter_mut().for_each(|v| *v = value);
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for block in self.blocks_mut() {
            block.iter_mut().for_each(|v| *v *= factor);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.blocks().iter().all(|b| b.iter().all(|v| v.is_finite()))
    }
}

fn glorot_fill<R: Rng + ?Sized>(m: &mut DenseMatrix, rng: &mut R) {
    let fan = (m.rows + m.cols).max(1) as f64;
    let limit = (6.0 / fan).sqrt();
    for v in m.data.iter_mut() {
        *v = rng.gen_range(-limit..=limit);
    }
}

/// Activations cached by one forward pass.
#[derive(Debug, Clone)]
pub struct GradTape {
    input: Vec<f64>,
    pre: Vec<f64>,
    hidden: Vec<f64>,
    out_dim: usize,
}

impl GradTape {
    pub fn input(&self) -> &[f64] {
        &self.input
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }
}

pub fn mlp_forward(params: &MlpParams, input: &[f64]) -> Result<(Vec<f64>, GradTape)> {
    if input.len() != params.in_dim() {
        return Err(Error::dim("mlp_forward input", params.in_dim(), input.len()));
    }
    let mut pre = vec![0.0; params.hidden_dim()];
    params.w1.affine_into(input, &params.b1, &mut pre);
    let hidden: Vec<f64> = pre.iter().map(|&z| selu(z)).collect();
    let mut out = vec![0.0; params.out_dim()];
    params.w2.affine_into(&hidden, &params.b2, &mut out);
    Ok((
        out,
        GradTape {
            input: input.to_vec(),
            pre,
            hidden,
            out_dim: params.out_dim(),
        },
    ))
}

/// Gradients of `out_grad · output` with respect to the parameters and the input.
pub fn mlp_backward(
    params: &MlpParams,
    tape: &GradTape,
    out_grad: &[f64],
) -> Result<(MlpParams, Vec<f64>)> {
    let mut grads = params.zeros_like();
    let mut input_grad = vec![0.0; params.in_dim()];
    mlp_backward_accumulate(params, tape, out_grad, &mut grads, Some(&mut input_grad))?;
    Ok((grads, input_grad))
}

/// Like [`mlp_backward`] but adds the parameter gradient into `grads` and
/// writes the input gradient only when requested.
pub fn mlp_backward_accumulate(
    params: &MlpParams,
    tape: &GradTape,
    out_grad: &[f64],
    grads: &mut MlpParams,
    input_grad: Option<&mut [f64]>,
) -> Result<()> {
    if out_grad.len() != tape.out_dim || tape.out_dim != params.out_dim() {
        return Err(Error::dim("mlp_backward out_grad", tape.out_dim, out_grad.len()));
    }
    if tape.pre.len() != params.hidden_dim() || tape.input.len() != params.in_dim() {
        return Err(Error::dim("mlp_backward tape", params.hidden_dim(), tape.pre.len()));
    }
    if grads.n_params() != params.n_params() {
        return Err(Error::dim("mlp_backward grads", params.n_params(), grads.n_params()));
    }

    let hidden_dim = params.hidden_dim();
    let mut g_hidden = vec![0.0; hidden_dim];
    for (o, &g) in out_grad.iter().enumerate() {
        if g == 0.0 {
            continue;
        }
        grads.b2[o] += g;
        let row = o * hidden_dim;
        axpy(g, &tape.hidden, &mut grads.w2.data[row..row + hidden_dim]);
        axpy(g, params.w2.row(o), &mut g_hidden);
    }

    let in_dim = params.in_dim();
    let mut input_grad = input_grad;
    if let Some(ig) = input_grad.as_deref_mut() {
        if ig.len() != in_dim {
            return Err(Error::dim("mlp_backward input_grad", in_dim, ig.len()));
        }
        ig.iter_mut().for_each(|v| *v = 0.0);
    }
    for h in 0..hidden_dim {
        let g_pre = g_hidden[h] * selu_grad(tape.pre[h]);
        if g_pre == 0.0 {
            continue;
        }
        grads.b1[h] += g_pre;
        let row = h * in_dim;
        axpy(g_pre, &tape.input, &mut grads.w1.data[row..row + in_dim]);
        if let Some(ig) = input_grad.as_deref_mut() {
            axpy(g_pre, params.w1.row(h), ig);
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-7,
        }
    }
}

/// Adam moments over a flat parameter vector.
///
/// Parameters are passed as a list of slices; the moments index through
/// them in order, so the same list layout must be used on every step.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub step: u64,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub config: AdamConfig,
}

impl AdamState {
    pub fn new(n_params: usize, config: AdamConfig) -> Self {
        Self {
            step: 0,
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
            config,
        }
    }

    /// One ascent step: `params += lr_t · m̂ / (√v̂ + eps)`.
    ///
    /// The bias correction is folded into the step size as in the common
    /// framework implementations, `lr_t = lr · √(1 − β2^t) / (1 − β1^t)`.
    pub fn step(&mut self, params: &mut [&mut [f64]], grads: &[&[f64]]) -> Result<()> {
        let total: usize = params.iter().map(|p| p.len()).sum();
        let total_g: usize = grads.iter().map(|g| g.len()).sum();
        if total != self.m.len() || params.len() != grads.len() {
            return Err(Error::dim("AdamState::step params", self.m.len(), total));
        }
        if total_g != total {
            return Err(Error::dim("AdamState::step grads", total, total_g));
        }
        let next = self.step + 1;
        if grads.iter().any(|g| g.iter().any(|v| !v.is_finite())) {
            return Err(Error::NonFiniteGradient { step: next });
        }
        self.step = next;
        let AdamConfig {
            lr,
            beta1,
            beta2,
            eps,
        } = self.config;
        let t = next as f64;
        let lr_t = lr * (1.0 - beta2.powf(t)).sqrt() / (1.0 - beta1.powf(t));
        let mut k = 0;
        for (p, g) in params.iter_mut().zip(grads) {
            if p.len() != g.len() {
                return Err(Error::dim("AdamState::step block", p.len(), g.len()));
            }
            for (pi, &gi) in p.iter_mut().zip(g.iter()) {
                let m = &mut self.m[k];
                let v = &mut self.v[k];
                *m = beta1 * *m + (1.0 - beta1) * gi;
                *v = beta2 * *v + (1.0 - beta2) * gi * gi;
                *pi += lr_t * *m / (v.sqrt() + eps);
                k += 1;
            }
        }
        Ok(())
    }
}

/// Single-network convenience wrapper around [`AdamState::step`].
pub fn adam_step(params: &mut MlpParams, grads: &MlpParams, state: &mut AdamState) -> Result<()> {
    let g = grads.blocks();
    state.step(&mut params.blocks_mut(), &g)
}
