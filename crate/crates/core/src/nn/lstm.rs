//! LSTM layer with hand-derived backpropagation through time.
//!
//! Standard forget-gate formulation, gate order `[input, forget, cell, output]`:
//!
//! ```text
//! gates = x_t · W_i^T + h_{t-1} · W_h^T + b
//! i = sigmoid(g_i), f = sigmoid(g_f), g = tanh(g_g), o = sigmoid(g_o)
//! c_t = f ⊙ c_{t-1} + i ⊙ g
//! h_t = o ⊙ tanh(c_t)
//! ```

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{sigmoid, Matrix};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LstmParams {
    pub input_dim: usize,
    pub hidden_dim: usize,
    /// (4*hidden) x input, gate-major rows.
    pub w_input: Matrix,
    /// (4*hidden) x hidden.
    pub w_hidden: Matrix,
    /// 1 x (4*hidden).
    pub bias: Matrix,
}

impl LstmParams {
    /// Glorot-uniform weights; zero biases except the forget-gate segment,
    /// which starts at 1.0.
    pub fn init(input_dim: usize, hidden_dim: usize, rng: &mut impl Rng) -> Result<Self> {
        if input_dim == 0 || hidden_dim == 0 {
            return Err(Error::InvalidDimension(
                "lstm dims must be >= 1".to_string(),
            ));
        }
        let gate_rows = 4 * hidden_dim;
        let w_input = glorot(gate_rows, input_dim, rng);
        let w_hidden = glorot(gate_rows, hidden_dim, rng);
        let mut bias = Matrix::zeros(1, gate_rows);
        for j in hidden_dim..2 * hidden_dim {
            bias.set(0, j, 1.0);
        }
        Ok(Self {
            input_dim,
            hidden_dim,
            w_input,
            w_hidden,
            bias,
        })
    }

    pub fn zeros(input_dim: usize, hidden_dim: usize) -> Self {
        Self {
            input_dim,
            hidden_dim,
            w_input: Matrix::zeros(4 * hidden_dim, input_dim),
            w_hidden: Matrix::zeros(4 * hidden_dim, hidden_dim),
            bias: Matrix::zeros(1, 4 * hidden_dim),
        }
    }
}

pub fn glorot(rows: usize, cols: usize, rng: &mut impl Rng) -> Matrix {
    let limit = (6.0 / (rows + cols) as f64).sqrt();
    Matrix::from_fn(rows, cols, |_, _| rng.gen_range(-limit..limit))
}

/// Per-timestep values retained for the backward pass.
#[derive(Debug, Clone)]
struct StepCache {
    input: Matrix,
    h_prev: Matrix,
    c_prev: Matrix,
    gate_i: Matrix,
    gate_f: Matrix,
    gate_g: Matrix,
    gate_o: Matrix,
    tanh_c: Matrix,
}

#[derive(Debug, Clone)]
pub struct LstmCache {
    input_dim: usize,
    hidden_dim: usize,
    batch: usize,
    steps: Vec<StepCache>,
}

impl LstmCache {
    pub fn batch(&self) -> usize {
        self.batch
    }

    pub fn seq_len(&self) -> usize {
        self.steps.len()
    }
}

#[derive(Debug, Clone)]
pub struct LstmGrads {
    pub w_input: Matrix,
    pub w_hidden: Matrix,
    pub bias: Matrix,
}

impl LstmGrads {
    pub fn zeros_like(p: &LstmParams) -> Self {
        Self {
            w_input: Matrix::zeros(p.w_input.rows(), p.w_input.cols()),
            w_hidden: Matrix::zeros(p.w_hidden.rows(), p.w_hidden.cols()),
            bias: Matrix::zeros(1, p.bias.cols()),
        }
    }
}

pub struct LstmOutput {
    /// One (batch x hidden) matrix per timestep.
    pub hidden_seq: Vec<Matrix>,
    pub final_h: Matrix,
    pub final_c: Matrix,
    pub cache: Option<LstmCache>,
}

/// Runs the recurrence over `inputs` (each timestep batch x input_dim).
/// The cache is returned only in training mode.
pub fn lstm_forward(
    params: &LstmParams,
    inputs: &[Matrix],
    h0: &Matrix,
    c0: &Matrix,
    training: bool,
) -> Result<LstmOutput> {
    if inputs.is_empty() {
        return Err(Error::InvalidDimension(
            "lstm_forward requires at least one timestep".to_string(),
        ));
    }
    let batch = inputs[0].rows();
    let hd = params.hidden_dim;
    for (t, x) in inputs.iter().enumerate() {
        if x.rows() != batch || x.cols() != params.input_dim {
            return Err(Error::InvalidDimension(format!(
                "timestep {} has shape {:?}, expected ({}, {})",
                t,
                x.shape(),
                batch,
                params.input_dim
            )));
        }
    }
    if h0.shape() != (batch, hd) || c0.shape() != (batch, hd) {
        return Err(Error::InvalidDimension(format!(
            "initial state shapes {:?}/{:?} do not match ({}, {})",
            h0.shape(),
            c0.shape(),
            batch,
            hd
        )));
    }

    let mut h = h0.clone();
    let mut c = c0.clone();
    let mut hidden_seq = Vec::with_capacity(inputs.len());
    let mut steps = Vec::with_capacity(if training { inputs.len() } else { 0 });

    for x in inputs {
        let mut gates = x.matmul_bt(&params.w_input);
        gates.add_assign(&h.matmul_bt(&params.w_hidden));
        gates.add_row_broadcast(&params.bias);

        let mut gate_i = Matrix::zeros(batch, hd);
        let mut gate_f = Matrix::zeros(batch, hd);
        let mut gate_g = Matrix::zeros(batch, hd);
        let mut gate_o = Matrix::zeros(batch, hd);
        for r in 0..batch {
            for j in 0..hd {
                gate_i.set(r, j, sigmoid(gates.get(r, j)));
                gate_f.set(r, j, sigmoid(gates.get(r, hd + j)));
                gate_g.set(r, j, gates.get(r, 2 * hd + j).tanh());
                gate_o.set(r, j, sigmoid(gates.get(r, 3 * hd + j)));
            }
        }

        let c_new = gate_f
            .zip_map(&c, |f, cp| f * cp)
            .zip_map(&gate_i.zip_map(&gate_g, |i, g| i * g), |a, b| a + b);
        let tanh_c = c_new.map(f64::tanh);
        let h_new = gate_o.zip_map(&tanh_c, |o, tc| o * tc);

        if training {
            steps.push(StepCache {
                input: x.clone(),
                h_prev: h.clone(),
                c_prev: c.clone(),
                gate_i,
                gate_f,
                gate_g,
                gate_o,
                tanh_c,
            });
        }

        h = h_new;
        c = c_new;
        hidden_seq.push(h.clone());
    }

    let cache = training.then_some(LstmCache {
        input_dim: params.input_dim,
        hidden_dim: hd,
        batch,
        steps,
    });

    Ok(LstmOutput {
        hidden_seq,
        final_h: h,
        final_c: c,
        cache,
    })
}

/// Exact BPTT gradients for parameters and inputs, given the upstream
/// gradient of every hidden state in the sequence.
pub fn lstm_backward(
    params: &LstmParams,
    cache: &LstmCache,
    grad_hidden_seq: &[Matrix],
) -> Result<(LstmGrads, Vec<Matrix>)> {
    let hd = cache.hidden_dim;
    let batch = cache.batch;
    if grad_hidden_seq.len() != cache.steps.len() {
        return Err(Error::InvalidDimension(format!(
            "gradient sequence length {} does not match cached {}",
            grad_hidden_seq.len(),
            cache.steps.len()
        )));
    }
    for g in grad_hidden_seq {
        if g.shape() != (batch, hd) {
            return Err(Error::InvalidDimension(format!(
                "hidden gradient shape {:?}, expected ({}, {})",
                g.shape(),
                batch,
                hd
            )));
        }
    }
    if params.hidden_dim != hd || params.input_dim != cache.input_dim {
        return Err(Error::InvalidDimension(
            "cache does not belong to these parameters".to_string(),
        ));
    }

    let mut grads = LstmGrads::zeros_like(params);
    let mut grad_inputs = vec![Matrix::zeros(batch, cache.input_dim); cache.steps.len()];
    let mut dh_next = Matrix::zeros(batch, hd);
    let mut dc_next = Matrix::zeros(batch, hd);

    for (t, step) in cache.steps.iter().enumerate().rev() {
        let mut dh = grad_hidden_seq[t].clone();
        dh.add_assign(&dh_next);

        // dc = dh ⊙ o ⊙ (1 - tanh(c)^2) + dc_next
        let mut dc = dh.zip_map(&step.gate_o, |d, o| d * o);
        dc = dc.zip_map(&step.tanh_c, |d, tc| d * (1.0 - tc * tc));
        dc.add_assign(&dc_next);

        // Pre-activation gate gradients, packed [i f g o].
        let mut d_gates = Matrix::zeros(batch, 4 * hd);
        for r in 0..batch {
            for j in 0..hd {
                let i = step.gate_i.get(r, j);
                let f = step.gate_f.get(r, j);
                let g = step.gate_g.get(r, j);
                let o = step.gate_o.get(r, j);
                let dcv = dc.get(r, j);
                d_gates.set(r, j, dcv * g * i * (1.0 - i));
                d_gates.set(r, hd + j, dcv * step.c_prev.get(r, j) * f * (1.0 - f));
                d_gates.set(r, 2 * hd + j, dcv * i * (1.0 - g * g));
                d_gates.set(
                    r,
                    3 * hd + j,
                    dh.get(r, j) * step.tanh_c.get(r, j) * o * (1.0 - o),
                );
            }
        }

        grads.w_input.add_assign(&d_gates.matmul_at(&step.input));
        grads.w_hidden.add_assign(&d_gates.matmul_at(&step.h_prev));
        grads.bias.add_assign(&d_gates.col_sums());

        grad_inputs[t] = d_gates.matmul(&params.w_input);
        dh_next = d_gates.matmul(&params.w_hidden);
        dc_next = dc.zip_map(&step.gate_f, |d, f| d * f);
    }

    Ok((grads, grad_inputs))
}
