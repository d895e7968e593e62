//! The full layer stack and its hand-derived backward pass.
//!
//! Architecture, with dims fixed at 64 -> 32 -> 16 -> 1:
//!
//! ```text
//! input sequence (T x batch x state_size)
//!   -> LSTM(64)   [final hidden state]
//!   -> BatchNorm -> Dropout
//!   -> LSTM(32)   [single step over the processed state]
//!   -> BatchNorm -> Dropout
//!   -> Dense(16) + ReLU -> BatchNorm
//!   -> Dense(1) -> sigmoid
//! ```

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::batchnorm::{
    batchnorm_backward, batchnorm_forward, BatchNormParams, BnCache, BnGrads,
};
use crate::nn::dense::{dense_backward, dense_forward, DenseGrads, DenseParams};
use crate::nn::dropout::{dropout_backward, dropout_forward};
use crate::nn::loss::{weighted_bce_grad, ClassWeights};
use crate::nn::lstm::{lstm_backward, lstm_forward, LstmCache, LstmGrads, LstmParams};
use crate::tensor::{sigmoid, Matrix};

pub const HIDDEN1: usize = 64;
pub const HIDDEN2: usize = 32;
pub const DENSE_UNITS: usize = 16;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub lstm1: LstmParams,
    pub bn1: BatchNormParams,
    pub lstm2: LstmParams,
    pub bn2: BatchNormParams,
    pub dense1: DenseParams,
    pub bn3: BatchNormParams,
    pub dense2: DenseParams,
    pub dropout_rate: f64,
}

impl ModelParams {
    pub fn state_size(&self) -> usize {
        self.lstm1.input_dim
    }

    /// Tensors updated by the optimizer, in a fixed traversal order.
    pub fn learnable_tensors_mut(&mut self) -> Vec<(&'static str, &mut Matrix)> {
        vec![
            ("lstm1.w_input", &mut self.lstm1.w_input),
            ("lstm1.w_hidden", &mut self.lstm1.w_hidden),
            ("lstm1.bias", &mut self.lstm1.bias),
            ("bn1.gamma", &mut self.bn1.gamma),
            ("bn1.beta", &mut self.bn1.beta),
            ("lstm2.w_input", &mut self.lstm2.w_input),
            ("lstm2.w_hidden", &mut self.lstm2.w_hidden),
            ("lstm2.bias", &mut self.lstm2.bias),
            ("bn2.gamma", &mut self.bn2.gamma),
            ("bn2.beta", &mut self.bn2.beta),
            ("dense1.w", &mut self.dense1.w),
            ("dense1.b", &mut self.dense1.b),
            ("bn3.gamma", &mut self.bn3.gamma),
            ("bn3.beta", &mut self.bn3.beta),
            ("dense2.w", &mut self.dense2.w),
            ("dense2.b", &mut self.dense2.b),
        ]
    }

    /// All tensors including batch-norm running statistics, for persistence.
    pub fn all_tensors(&self) -> Vec<(&'static str, &Matrix)> {
        vec![
            ("lstm1.w_input", &self.lstm1.w_input),
            ("lstm1.w_hidden", &self.lstm1.w_hidden),
            ("lstm1.bias", &self.lstm1.bias),
            ("bn1.gamma", &self.bn1.gamma),
            ("bn1.beta", &self.bn1.beta),
            ("bn1.running_mean", &self.bn1.running_mean),
            ("bn1.running_var", &self.bn1.running_var),
            ("lstm2.w_input", &self.lstm2.w_input),
            ("lstm2.w_hidden", &self.lstm2.w_hidden),
            ("lstm2.bias", &self.lstm2.bias),
            ("bn2.gamma", &self.bn2.gamma),
            ("bn2.beta", &self.bn2.beta),
            ("bn2.running_mean", &self.bn2.running_mean),
            ("bn2.running_var", &self.bn2.running_var),
            ("dense1.w", &self.dense1.w),
            ("dense1.b", &self.dense1.b),
            ("bn3.gamma", &self.bn3.gamma),
            ("bn3.beta", &self.bn3.beta),
            ("bn3.running_mean", &self.bn3.running_mean),
            ("bn3.running_var", &self.bn3.running_var),
            ("dense2.w", &self.dense2.w),
            ("dense2.b", &self.dense2.b),
        ]
    }

    pub fn all_tensors_mut(&mut self) -> Vec<(&'static str, &mut Matrix)> {
        vec![
            ("lstm1.w_input", &mut self.lstm1.w_input),
            ("lstm1.w_hidden", &mut self.lstm1.w_hidden),
            ("lstm1.bias", &mut self.lstm1.bias),
            ("bn1.gamma", &mut self.bn1.gamma),
            ("bn1.beta", &mut self.bn1.beta),
            ("bn1.running_mean", &mut self.bn1.running_mean),
            ("bn1.running_var", &mut self.bn1.running_var),
            ("lstm2.w_input", &mut self.lstm2.w_input),
            ("lstm2.w_hidden", &mut self.lstm2.w_hidden),
            ("lstm2.bias", &mut self.lstm2.bias),
            ("bn2.gamma", &mut self.bn2.gamma),
            ("bn2.beta", &mut self.bn2.beta),
            ("bn2.running_mean", &mut self.bn2.running_mean),
            ("bn2.running_var", &mut self.bn2.running_var),
            ("dense1.w", &mut self.dense1.w),
            ("dense1.b", &mut self.dense1.b),
            ("bn3.gamma", &mut self.bn3.gamma),
            ("bn3.beta", &mut self.bn3.beta),
            ("bn3.running_mean", &mut self.bn3.running_mean),
            ("bn3.running_var", &mut self.bn3.running_var),
            ("dense2.w", &mut self.dense2.w),
            ("dense2.b", &mut self.dense2.b),
        ]
    }
}

/// Gradients for every learnable tensor, mirroring [`ModelParams`] shapes.
#[derive(Debug, Clone)]
pub struct ModelGrads {
    pub lstm1: LstmGrads,
    pub bn1: BnGrads,
    pub lstm2: LstmGrads,
    pub bn2: BnGrads,
    pub dense1: DenseGrads,
    pub bn3: BnGrads,
    pub dense2: DenseGrads,
}

impl ModelGrads {
    pub fn zeros_like(p: &ModelParams) -> Self {
        Self {
            lstm1: LstmGrads::zeros_like(&p.lstm1),
            bn1: BnGrads::zeros_like(&p.bn1),
            lstm2: LstmGrads::zeros_like(&p.lstm2),
            bn2: BnGrads::zeros_like(&p.bn2),
            dense1: DenseGrads::zeros_like(&p.dense1),
            bn3: BnGrads::zeros_like(&p.bn3),
            dense2: DenseGrads::zeros_like(&p.dense2),
        }
    }

    /// Same order as [`ModelParams::learnable_tensors_mut`].
    pub fn tensors(&self) -> Vec<(&'static str, &Matrix)> {
        vec![
            ("lstm1.w_input", &self.lstm1.w_input),
            ("lstm1.w_hidden", &self.lstm1.w_hidden),
            ("lstm1.bias", &self.lstm1.bias),
            ("bn1.gamma", &self.bn1.gamma),
            ("bn1.beta", &self.bn1.beta),
            ("lstm2.w_input", &self.lstm2.w_input),
            ("lstm2.w_hidden", &self.lstm2.w_hidden),
            ("lstm2.bias", &self.lstm2.bias),
            ("bn2.gamma", &self.bn2.gamma),
            ("bn2.beta", &self.bn2.beta),
            ("dense1.w", &self.dense1.w),
            ("dense1.b", &self.dense1.b),
            ("bn3.gamma", &self.bn3.gamma),
            ("bn3.beta", &self.bn3.beta),
            ("dense2.w", &self.dense2.w),
            ("dense2.b", &self.dense2.b),
        ]
    }

    pub fn tensors_mut(&mut self) -> Vec<(&'static str, &mut Matrix)> {
        vec![
            ("lstm1.w_input", &mut self.lstm1.w_input),
            ("lstm1.w_hidden", &mut self.lstm1.w_hidden),
            ("lstm1.bias", &mut self.lstm1.bias),
            ("bn1.gamma", &mut self.bn1.gamma),
            ("bn1.beta", &mut self.bn1.beta),
            ("lstm2.w_input", &mut self.lstm2.w_input),
            ("lstm2.w_hidden", &mut self.lstm2.w_hidden),
            ("lstm2.bias", &mut self.lstm2.bias),
            ("bn2.gamma", &mut self.bn2.gamma),
            ("bn2.beta", &mut self.bn2.beta),
            ("dense1.w", &mut self.dense1.w),
            ("dense1.b", &mut self.dense1.b),
            ("bn3.gamma", &mut self.bn3.gamma),
            ("bn3.beta", &mut self.bn3.beta),
            ("dense2.w", &mut self.dense2.w),
            ("dense2.b", &mut self.dense2.b),
        ]
    }
}

/// Intermediate activations from one training-mode forward pass.
pub struct ForwardCache {
    batch: usize,
    lstm1: LstmCache,
    bn1: BnCache,
    drop1_mask: Matrix,
    lstm2: LstmCache,
    bn2: BnCache,
    drop2_mask: Matrix,
    dense1_input: Matrix,
    /// Dense1 pre-activation, kept for the ReLU derivative.
    z1: Matrix,
    bn3: BnCache,
    dense2_input: Matrix,
}

impl ForwardCache {
    pub fn batch(&self) -> usize {
        self.batch
    }
}

/// Creates the full parameter set for the given feature width.
/// Weights are Glorot uniform; determinism follows from the seed.
pub fn init_params(state_size: usize, seed: u64) -> Result<ModelParams> {
    if state_size == 0 {
        return Err(Error::InvalidDimension(
            "state_size must be >= 1".to_string(),
        ));
    }
    let mut rng = crate::rng::seeded(seed);
    Ok(ModelParams {
        lstm1: LstmParams::init(state_size, HIDDEN1, &mut rng)?,
        bn1: BatchNormParams::new(HIDDEN1),
        lstm2: LstmParams::init(HIDDEN1, HIDDEN2, &mut rng)?,
        bn2: BatchNormParams::new(HIDDEN2),
        dense1: DenseParams::init(HIDDEN2, DENSE_UNITS, &mut rng)?,
        bn3: BatchNormParams::new(DENSE_UNITS),
        dense2: DenseParams::init(DENSE_UNITS, 1, &mut rng)?,
        dropout_rate: 0.2,
    })
}

/// Runs the stack over a batch given as one (batch x state_size) matrix per
/// timestep. Returns one purchase probability per batch row, each strictly
/// inside (0, 1). Training mode updates batch-norm running statistics in
/// place and returns the cache for [`model_backward`]; `rng` is drawn from
/// only when dropout is active.
pub fn model_forward(
    params: &mut ModelParams,
    batch: &[Matrix],
    training: bool,
    rng: &mut impl Rng,
) -> Result<(Vec<f64>, Option<ForwardCache>)> {
    if batch.is_empty() {
        return Err(Error::EmptyInput(
            "model_forward on empty batch".to_string(),
        ));
    }
    let batch_size = batch[0].rows();
    let state_size = params.state_size();
    for (t, x) in batch.iter().enumerate() {
        if x.cols() != state_size || x.rows() != batch_size {
            return Err(Error::InvalidDimension(format!(
                "timestep {} shape {:?}, expected ({}, {})",
                t,
                x.shape(),
                batch_size,
                state_size
            )));
        }
    }

    let rate = params.dropout_rate;
    let zeros1 = Matrix::zeros(batch_size, HIDDEN1);
    let out1 = lstm_forward(&params.lstm1, batch, &zeros1, &zeros1, training)?;
    let (u1, bn1_cache) = batchnorm_forward(&mut params.bn1, &out1.final_h, training)?;
    let (d1, drop1_mask) = dropout_forward(&u1, rate, rng, training)?;

    let zeros2 = Matrix::zeros(batch_size, HIDDEN2);
    let lstm2_inputs = [d1];
    let out2 = lstm_forward(&params.lstm2, &lstm2_inputs, &zeros2, &zeros2, training)?;
    let (u2, bn2_cache) = batchnorm_forward(&mut params.bn2, &out2.final_h, training)?;
    let (d2, drop2_mask) = dropout_forward(&u2, rate, rng, training)?;

    let z1 = dense_forward(&params.dense1, &d2)?;
    let relu = z1.map(|v| v.max(0.0));
    let (u3, bn3_cache) = batchnorm_forward(&mut params.bn3, &relu, training)?;
    let z2 = dense_forward(&params.dense2, &u3)?;
    let probs: Vec<f64> = (0..batch_size).map(|r| sigmoid(z2.get(r, 0))).collect();

    let cache = if training {
        Some(ForwardCache {
            batch: batch_size,
            lstm1: out1.cache.expect("training forward retains lstm1 cache"),
            bn1: bn1_cache.expect("training forward retains bn1 cache"),
            drop1_mask: drop1_mask.expect("training forward retains dropout mask"),
            lstm2: out2.cache.expect("training forward retains lstm2 cache"),
            bn2: bn2_cache.expect("training forward retains bn2 cache"),
            drop2_mask: drop2_mask.expect("training forward retains dropout mask"),
            dense1_input: d2,
            z1,
            bn3: bn3_cache.expect("training forward retains bn3 cache"),
            dense2_input: u3,
        })
    } else {
        None
    };

    Ok((probs, cache))
}

/// Gradient of the class-weighted BCE with respect to every learnable
/// parameter, for the batch the cache was produced from.
pub fn model_backward(
    params: &ModelParams,
    cache: Option<&ForwardCache>,
    probs: &[f64],
    labels: &[f64],
    weights: ClassWeights,
) -> Result<ModelGrads> {
    let cache = cache.ok_or_else(|| {
        Error::StaleCache(
            "model_backward requires the cache from a training-mode forward".to_string(),
        )
    })?;
    if probs.len() != cache.batch || labels.len() != cache.batch {
        return Err(Error::StaleCache(format!(
            "cache batch {} does not match probs/labels lengths {}/{}",
            cache.batch,
            probs.len(),
            labels.len()
        )));
    }

    let dldp = weighted_bce_grad(probs, labels, weights)?;
    let dz2 = Matrix::from_fn(cache.batch, 1, |r, _| dldp[r] * probs[r] * (1.0 - probs[r]));

    let (d_u3, dense2_grads) = dense_backward(&params.dense2, &cache.dense2_input, &dz2);
    let (d_relu, bn3_grads) = batchnorm_backward(&params.bn3, &cache.bn3, &d_u3)?;
    let d_z1 = d_relu.zip_map(&cache.z1, |g, z| if z > 0.0 { g } else { 0.0 });
    let (d_d2, dense1_grads) = dense_backward(&params.dense1, &cache.dense1_input, &d_z1);

    let d_u2 = dropout_backward(&d_d2, &cache.drop2_mask);
    let (d_h2, bn2_grads) = batchnorm_backward(&params.bn2, &cache.bn2, &d_u2)?;
    let (lstm2_grads, mut d_lstm2_inputs) = lstm_backward(&params.lstm2, &cache.lstm2, &[d_h2])?;
    let d_d1 = d_lstm2_inputs.pop().expect("lstm2 ran one timestep");

    let d_u1 = dropout_backward(&d_d1, &cache.drop1_mask);
    let (d_h1, bn1_grads) = batchnorm_backward(&params.bn1, &cache.bn1, &d_u1)?;
    let seq_len = cache.lstm1.seq_len();
    let mut grad_seq = vec![Matrix::zeros(cache.batch, HIDDEN1); seq_len];
    grad_seq[seq_len - 1] = d_h1;
    let (lstm1_grads, _) = lstm_backward(&params.lstm1, &cache.lstm1, &grad_seq)?;

    Ok(ModelGrads {
        lstm1: lstm1_grads,
        bn1: bn1_grads,
        lstm2: lstm2_grads,
        bn2: bn2_grads,
        dense1: dense1_grads,
        bn3: bn3_grads,
        dense2: dense2_grads,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::loss::weighted_bce;
    use crate::rng::seeded;

    fn random_batch(rng: &mut impl Rng, t: usize, batch: usize, width: usize) -> Vec<Matrix> {
        (0..t)
            .map(|_| Matrix::from_fn(batch, width, |_, _| rng.gen_range(-1.0..1.0)))
            .collect()
    }

    #[test]
    fn init_is_deterministic_in_seed() {
        let a = init_params(4, 7).unwrap();
        let b = init_params(4, 7).unwrap();
        assert_eq!(a, b);
        let c = init_params(4, 8).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn init_shapes_follow_architecture() {
        let p = init_params(1114, 1).unwrap();
        assert_eq!(p.lstm1.w_input.shape(), (256, 1114));
        assert_eq!(p.lstm2.w_input.shape(), (128, 64));
        assert_eq!(p.dense1.w.shape(), (16, 32));
        assert_eq!(p.dense2.w.shape(), (1, 16));
        assert!(p.bn1.gamma.data().iter().all(|&g| g == 1.0));
        assert_eq!(p.bn1.gamma.cols(), 64);
    }

    #[test]
    fn zero_state_size_is_rejected() {
        assert!(matches!(init_params(0, 1), Err(Error::InvalidDimension(_))));
    }

    #[test]
    fn outputs_strictly_inside_unit_interval() {
        let mut rng = seeded(30);
        let mut params = init_params(6, 31).unwrap();
        // Exaggerate weights to push the logits toward saturation.
        for (_, t) in params.learnable_tensors_mut() {
            t.scale_assign(50.0);
        }
        let batch = random_batch(&mut rng, 2, 5, 6);
        let (probs, _) = model_forward(&mut params, &batch, false, &mut rng).unwrap();
        for p in probs {
            assert!(p > 0.0 && p < 1.0);
        }
    }

    #[test]
    fn zero_params_in_inference_give_one_half() {
        let mut params = init_params(3, 1).unwrap();
        for (_, t) in params.learnable_tensors_mut() {
            t.scale_assign(0.0);
        }
        // Glorot never produces zeros, so rebuild the bn scale explicitly:
        // gamma one, everything else zero.
        params.bn1.gamma = Matrix::filled(1, HIDDEN1, 1.0);
        params.bn2.gamma = Matrix::filled(1, HIDDEN2, 1.0);
        params.bn3.gamma = Matrix::filled(1, DENSE_UNITS, 1.0);
        let mut rng = seeded(2);
        let batch = random_batch(&mut rng, 1, 4, 3);
        let (probs, cache) = model_forward(&mut params, &batch, false, &mut rng).unwrap();
        assert!(cache.is_none());
        for p in probs {
            assert!((p - 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn high_dimensional_input_shapes() {
        let mut params = init_params(1114, 3).unwrap();
        let mut rng = seeded(4);
        let batch = random_batch(&mut rng, 1, 32, 1114);
        let (probs, _) = model_forward(&mut params, &batch, false, &mut rng).unwrap();
        assert_eq!(probs.len(), 32);
    }

    #[test]
    fn missing_cache_is_stale_cache_error() {
        let params = init_params(3, 1).unwrap();
        let err = model_backward(&params, None, &[0.5], &[1.0], ClassWeights::uniform());
        assert!(matches!(err, Err(Error::StaleCache(_))));
    }

    #[test]
    fn near_perfect_predictions_give_near_zero_gradients() {
        let mut rng = seeded(40);
        let mut params = init_params(4, 41).unwrap();
        params.dropout_rate = 0.0;
        let batch = random_batch(&mut rng, 1, 4, 4);
        let (_, cache) = model_forward(&mut params, &batch, true, &mut rng).unwrap();
        // Pretend the model output matched the clipped targets exactly.
        let labels = vec![1.0, 0.0, 1.0, 0.0];
        let probs: Vec<f64> = labels
            .iter()
            .map(|&y| if y > 0.5 { 1.0 - 1e-7 } else { 1e-7 })
            .collect();
        let grads = model_backward(
            &params,
            cache.as_ref(),
            &probs,
            &labels,
            ClassWeights::uniform(),
        )
        .unwrap();
        for (name, t) in grads.tensors() {
            for &v in t.data() {
                assert!(v.abs() <= 1e-5, "{name} grad {v}");
            }
        }
    }

    #[test]
    fn doubling_positive_weight_doubles_gradient_on_positive_batch() {
        let mut rng = seeded(50);
        let mut params = init_params(4, 51).unwrap();
        params.dropout_rate = 0.0;
        let batch = random_batch(&mut rng, 1, 4, 4);
        let (probs, cache) = model_forward(&mut params, &batch, true, &mut rng).unwrap();
        let labels = vec![1.0; 4];
        let g1 = model_backward(
            &params,
            cache.as_ref(),
            &probs,
            &labels,
            ClassWeights { w0: 1.0, w1: 1.0 },
        )
        .unwrap();
        let g2 = model_backward(
            &params,
            cache.as_ref(),
            &probs,
            &labels,
            ClassWeights { w0: 1.0, w1: 2.0 },
        )
        .unwrap();
        for ((_, a), (_, b)) in g1.tensors().iter().zip(g2.tensors()) {
            for (x, y) in a.data().iter().zip(b.data()) {
                assert!((2.0 * x - y).abs() <= 1e-12 * y.abs().max(1e-9));
            }
        }
    }

    /// Full-model gradient check against central finite differences at
    /// state_size 5, batch 4, with dropout disabled and batch norm in
    /// training mode on the fixed batch.
    #[test]
    fn full_model_gradients_match_finite_differences() {
        let mut rng = seeded(60);
        let mut params = init_params(5, 61).unwrap();
        params.dropout_rate = 0.0;
        let batch = random_batch(&mut rng, 2, 4, 5);
        let labels = vec![1.0, 0.0, 0.0, 1.0];
        let weights = ClassWeights { w0: 0.8, w1: 1.7 };

        let loss_of = |params: &ModelParams| -> f64 {
            let mut p = params.clone();
            let mut r = seeded(0); // never drawn: dropout_rate is zero
            let (probs, _) = model_forward(&mut p, &batch, true, &mut r).unwrap();
            weighted_bce(&probs, &labels, weights).unwrap()
        };

        let (probs, cache) = {
            let mut p = params.clone();
            let mut r = seeded(0);
            model_forward(&mut p, &batch, true, &mut r).unwrap()
        };
        let grads = model_backward(&params, cache.as_ref(), &probs, &labels, weights).unwrap();

        let h = 1e-5;
        let mut checked = 0usize;
        let names: Vec<&'static str> = grads.tensors().iter().map(|(n, _)| *n).collect();
        for name in names {
            let numel = grads
                .tensors()
                .iter()
                .find(|(n, _)| *n == name)
                .map(|(_, t)| t.len())
                .unwrap();
            // Spot-check a deterministic spread of coordinates per tensor.
            let take = numel.min(9);
            for s in 0..take {
                let idx = s * numel / take;
                let orig = {
                    let mut ts = params.learnable_tensors_mut();
                    let (_, t) = ts.iter_mut().find(|(n, _)| *n == name).unwrap();
                    let v = t.data()[idx];
                    t.data_mut()[idx] = v + h;
                    v
                };
                let up = loss_of(&params);
                {
                    let mut ts = params.learnable_tensors_mut();
                    let (_, t) = ts.iter_mut().find(|(n, _)| *n == name).unwrap();
                    t.data_mut()[idx] = orig - h;
                }
                let down = loss_of(&params);
                {
                    let mut ts = params.learnable_tensors_mut();
                    let (_, t) = ts.iter_mut().find(|(n, _)| *n == name).unwrap();
                    t.data_mut()[idx] = orig;
                }
                let numeric = (up - down) / (2.0 * h);
                let analytic = grads
                    .tensors()
                    .iter()
                    .find(|(n, _)| *n == name)
                    .map(|(_, t)| t.data()[idx])
                    .unwrap();
                let denom = analytic.abs().max(numeric.abs()).max(1e-6);
                assert!(
                    (analytic - numeric).abs() / denom < 1e-4,
                    "{name}[{idx}]: analytic {analytic} vs numeric {numeric}"
                );
                checked += 1;
            }
        }
        assert!(checked > 100);
    }
}
