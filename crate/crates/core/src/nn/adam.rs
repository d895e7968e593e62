//! Bias-corrected Adam.

use crate::error::{Error, Result};
use crate::nn::model::{ModelGrads, ModelParams};
use crate::tensor::Matrix;

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

/// First/second moment buffers mirroring the learnable tensors.
#[derive(Debug)]
pub struct AdamState {
    pub m: ModelGrads,
    pub v: ModelGrads,
    pub t: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    pub fn new(params: &ModelParams) -> Self {
        Self {
            m: ModelGrads::zeros_like(params),
            v: ModelGrads::zeros_like(params),
            t: 0,
            beta1: BETA1,
            beta2: BETA2,
            eps: ADAM_EPS,
        }
    }
}

/// Single-tensor Adam update; shared by the model optimizer and the
/// logistic-regression baseline.
#[allow(clippy::too_many_arguments)]
pub fn adam_update_tensor(
    param: &mut Matrix,
    grad: &Matrix,
    m: &mut Matrix,
    v: &mut Matrix,
    t: u64,
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
) -> Result<()> {
    if !param.same_shape(grad) || !param.same_shape(m) || !param.same_shape(v) {
        return Err(Error::InvalidDimension(format!(
            "adam shapes disagree: param {:?}, grad {:?}",
            param.shape(),
            grad.shape()
        )));
    }
    let bc1 = 1.0 - beta1.powi(t as i32);
    let bc2 = 1.0 - beta2.powi(t as i32);
    let (p, g, m, v) = (param.data_mut(), grad.data(), m.data_mut(), v.data_mut());
    for i in 0..p.len() {
        m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
        v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
        let m_hat = m[i] / bc1;
        let v_hat = v[i] / bc2;
        p[i] -= lr * m_hat / (v_hat.sqrt() + eps);
    }
    Ok(())
}

/// One optimizer step over the whole model. Increments `state.t` by one.
pub fn adam_step(
    params: &mut ModelParams,
    grads: &ModelGrads,
    state: &mut AdamState,
    lr: f64,
) -> Result<()> {
    if lr <= 0.0 {
        return Err(Error::Config(format!(
            "learning rate must be > 0, got {lr}"
        )));
    }
    state.t += 1;
    let AdamState {
        m,
        v,
        t,
        beta1,
        beta2,
        eps,
        ..
    } = state;
    let mut m_tensors = m.tensors_mut();
    let mut v_tensors = v.tensors_mut();
    let grad_tensors = grads.tensors();
    for (i, (name, param)) in params.learnable_tensors_mut().into_iter().enumerate() {
        debug_assert_eq!(grad_tensors[i].0, name);
        adam_update_tensor(
            param,
            grad_tensors[i].1,
            m_tensors[i].1,
            v_tensors[i].1,
            *t,
            lr,
            *beta1,
            *beta2,
            *eps,
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::model::init_params;

    #[test]
    fn zero_gradients_leave_params_unchanged() {
        let mut params = init_params(3, 1).unwrap();
        let before = params.clone();
        let grads = ModelGrads::zeros_like(&params);
        let mut state = AdamState::new(&params);
        adam_step(&mut params, &grads, &mut state, 0.001).unwrap();
        assert_eq!(params, before);
        assert_eq!(state.t, 1);
    }

    #[test]
    fn first_step_magnitude_is_learning_rate() {
        let mut p = Matrix::row_vector(vec![0.0]);
        let g = Matrix::row_vector(vec![1.0]);
        let mut m = Matrix::zeros(1, 1);
        let mut v = Matrix::zeros(1, 1);
        adam_update_tensor(&mut p, &g, &mut m, &mut v, 1, 0.001, BETA1, BETA2, ADAM_EPS).unwrap();
        let got = p.get(0, 0);
        assert!((got + 0.001).abs() < 1e-8, "param {got}");
        // First-step bound holds for any gradient magnitude.
        for grad in [1e-6, 0.5, 7.0, 1e6] {
            let mut p = Matrix::row_vector(vec![0.0]);
            let g = Matrix::row_vector(vec![grad]);
            let mut m = Matrix::zeros(1, 1);
            let mut v = Matrix::zeros(1, 1);
            adam_update_tensor(&mut p, &g, &mut m, &mut v, 1, 0.001, BETA1, BETA2, ADAM_EPS)
                .unwrap();
            assert!(p.get(0, 0).abs() <= 0.001 * (1.0 + 1e-9));
        }
    }

    /// Hand-unrolled scalar Adam over three steps with a constant gradient.
    #[test]
    fn three_steps_match_hand_unrolled_scalar() {
        let (lr, g) = (0.01, 0.3);
        let mut expected = 0.2_f64;
        let (mut m, mut v) = (0.0_f64, 0.0_f64);
        for t in 1..=3 {
            m = BETA1 * m + (1.0 - BETA1) * g;
            v = BETA2 * v + (1.0 - BETA2) * g * g;
            let m_hat = m / (1.0 - BETA1.powi(t));
            let v_hat = v / (1.0 - BETA2.powi(t));
            expected -= lr * m_hat / (v_hat.sqrt() + ADAM_EPS);
        }

        let mut p = Matrix::row_vector(vec![0.2]);
        let grad = Matrix::row_vector(vec![g]);
        let mut ms = Matrix::zeros(1, 1);
        let mut vs = Matrix::zeros(1, 1);
        for t in 1..=3 {
            adam_update_tensor(
                &mut p, &grad, &mut ms, &mut vs, t, lr, BETA1, BETA2, ADAM_EPS,
            )
            .unwrap();
        }
        assert!((p.get(0, 0) - expected).abs() < 1e-15);
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        let mut p = Matrix::zeros(2, 2);
        let g = Matrix::zeros(2, 3);
        let mut m = Matrix::zeros(2, 2);
        let mut v = Matrix::zeros(2, 2);
        assert!(matches!(
            adam_update_tensor(&mut p, &g, &mut m, &mut v, 1, 0.1, BETA1, BETA2, ADAM_EPS),
            Err(Error::InvalidDimension(_))
        ));
    }
}
