//! Batch normalization over (batch x dim) activations.
//!
//! Training mode normalizes by the biased batch statistics and folds them
//! into the running estimates; inference normalizes by the running estimates.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Matrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchNormParams {
    pub dim: usize,
    pub gamma: Matrix,
    pub beta: Matrix,
    pub running_mean: Matrix,
    pub running_var: Matrix,
    pub momentum: f64,
    pub eps: f64,
}

impl BatchNormParams {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            gamma: Matrix::filled(1, dim, 1.0),
            beta: Matrix::zeros(1, dim),
            running_mean: Matrix::zeros(1, dim),
            running_var: Matrix::filled(1, dim, 1.0),
            momentum: 0.9,
            eps: 1e-5,
        }
    }
}

#[derive(Debug, Clone)]
pub struct BnCache {
    /// Normalized pre-scale activations.
    x_hat: Matrix,
    /// 1 / sqrt(var + eps) per feature.
    inv_std: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct BnGrads {
    pub gamma: Matrix,
    pub beta: Matrix,
}

impl BnGrads {
    pub fn zeros_like(p: &BatchNormParams) -> Self {
        Self {
            gamma: Matrix::zeros(1, p.dim),
            beta: Matrix::zeros(1, p.dim),
        }
    }
}

/// In training mode the running statistics of `params` are updated in place.
pub fn batchnorm_forward(
    params: &mut BatchNormParams,
    x: &Matrix,
    training: bool,
) -> Result<(Matrix, Option<BnCache>)> {
    if x.cols() != params.dim {
        return Err(Error::InvalidDimension(format!(
            "batchnorm input width {} does not match dim {}",
            x.cols(),
            params.dim
        )));
    }
    let batch = x.rows();

    if training {
        if batch < 2 {
            return Err(Error::DegenerateBatch(format!(
                "batchnorm training requires batch >= 2, got {batch}"
            )));
        }
        let n = batch as f64;
        let mut mean = vec![0.0; params.dim];
        let mut var = vec![0.0; params.dim];
        for r in 0..batch {
            for (j, m) in mean.iter_mut().enumerate() {
                *m += x.get(r, j);
            }
        }
        for m in &mut mean {
            *m /= n;
        }
        for r in 0..batch {
            for (j, v) in var.iter_mut().enumerate() {
                let d = x.get(r, j) - mean[j];
                *v += d * d;
            }
        }
        for v in &mut var {
            *v /= n;
        }

        let inv_std: Vec<f64> = var.iter().map(|&v| 1.0 / (v + params.eps).sqrt()).collect();
        let x_hat = Matrix::from_fn(batch, params.dim, |r, j| {
            (x.get(r, j) - mean[j]) * inv_std[j]
        });
        let y = Matrix::from_fn(batch, params.dim, |r, j| {
            params.gamma.get(0, j) * x_hat.get(r, j) + params.beta.get(0, j)
        });

        let m = params.momentum;
        for j in 0..params.dim {
            let rm = m * params.running_mean.get(0, j) + (1.0 - m) * mean[j];
            let rv = m * params.running_var.get(0, j) + (1.0 - m) * var[j];
            params.running_mean.set(0, j, rm);
            params.running_var.set(0, j, rv);
        }

        Ok((y, Some(BnCache { x_hat, inv_std })))
    } else {
        let y = Matrix::from_fn(batch, params.dim, |r, j| {
            let inv = 1.0 / (params.running_var.get(0, j) + params.eps).sqrt();
            params.gamma.get(0, j) * (x.get(r, j) - params.running_mean.get(0, j)) * inv
                + params.beta.get(0, j)
        });
        Ok((y, None))
    }
}

/// Analytic gradient through the batch statistics:
///
/// ```text
/// dx = inv_std / B * (B·dx̂ − Σ dx̂ − x̂ · Σ(dx̂ ⊙ x̂))
/// ```
pub fn batchnorm_backward(
    params: &BatchNormParams,
    cache: &BnCache,
    grad_y: &Matrix,
) -> Result<(Matrix, BnGrads)> {
    if !grad_y.same_shape(&cache.x_hat) {
        return Err(Error::InvalidDimension(format!(
            "batchnorm grad shape {:?} does not match cached {:?}",
            grad_y.shape(),
            cache.x_hat.shape()
        )));
    }
    let (batch, dim) = grad_y.shape();
    let n = batch as f64;

    let mut grad_gamma = vec![0.0; dim];
    let mut grad_beta = vec![0.0; dim];
    let mut sum_dxhat = vec![0.0; dim];
    let mut sum_dxhat_xhat = vec![0.0; dim];

    for r in 0..batch {
        for j in 0..dim {
            let gy = grad_y.get(r, j);
            let xh = cache.x_hat.get(r, j);
            grad_gamma[j] += gy * xh;
            grad_beta[j] += gy;
            let dxhat = gy * params.gamma.get(0, j);
            sum_dxhat[j] += dxhat;
            sum_dxhat_xhat[j] += dxhat * xh;
        }
    }

    let grad_x = Matrix::from_fn(batch, dim, |r, j| {
        let dxhat = grad_y.get(r, j) * params.gamma.get(0, j);
        cache.inv_std[j] / n
            * (n * dxhat - sum_dxhat[j] - cache.x_hat.get(r, j) * sum_dxhat_xhat[j])
    });

    Ok((
        grad_x,
        BnGrads {
            gamma: Matrix::row_vector(grad_gamma),
            beta: Matrix::row_vector(grad_beta),
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use rand::Rng;

    #[test]
    fn training_output_has_zero_mean_unit_variance() {
        // Input variance well above eps, so the eps/(var+eps) distortion of
        // the normalized variance stays under the 1e-6 tolerance.
        let mut params = BatchNormParams::new(3);
        let mut rng = seeded(10);
        let x = Matrix::from_fn(8, 3, |_, _| rng.gen_range(-12.0..12.0));
        let (y, _) = batchnorm_forward(&mut params, &x, true).unwrap();
        for j in 0..3 {
            let mean: f64 = (0..8).map(|r| y.get(r, j)).sum::<f64>() / 8.0;
            let var: f64 = (0..8).map(|r| (y.get(r, j) - mean).powi(2)).sum::<f64>() / 8.0;
            assert!(mean.abs() <= 1e-9, "mean {mean}");
            assert!((var - 1.0).abs() <= 1e-6, "var {var}");
        }
    }

    #[test]
    fn inference_with_unit_running_stats_is_near_identity() {
        let mut params = BatchNormParams::new(4);
        let mut rng = seeded(11);
        let x = Matrix::from_fn(5, 4, |_, _| rng.gen_range(-2.0..2.0));
        let (y, cache) = batchnorm_forward(&mut params, &x, false).unwrap();
        assert!(cache.is_none());
        for (a, b) in x.data().iter().zip(y.data()) {
            // deviation only from the eps in 1/sqrt(1 + eps)
            assert!((a - b).abs() <= 2e-5 * a.abs().max(1.0));
        }
    }

    #[test]
    fn batch_of_one_is_rejected_in_training() {
        let mut params = BatchNormParams::new(2);
        let x = Matrix::zeros(1, 2);
        assert!(matches!(
            batchnorm_forward(&mut params, &x, true),
            Err(Error::DegenerateBatch(_))
        ));
    }

    #[test]
    fn zero_grad_gives_zero_outputs() {
        let mut params = BatchNormParams::new(3);
        let x = Matrix::from_fn(4, 3, |r, j| (r * 3 + j) as f64);
        let (_, cache) = batchnorm_forward(&mut params, &x, true).unwrap();
        let (gx, grads) =
            batchnorm_backward(&params, &cache.unwrap(), &Matrix::zeros(4, 3)).unwrap();
        assert!(gx.data().iter().all(|&v| v == 0.0));
        assert!(grads.gamma.data().iter().all(|&v| v == 0.0));
        assert!(grads.beta.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn grad_gamma_is_sum_of_grad_y_times_xhat() {
        let mut params = BatchNormParams::new(2);
        let mut rng = seeded(12);
        let x = Matrix::from_fn(5, 2, |_, _| rng.gen_range(-3.0..3.0));
        let (_, cache) = batchnorm_forward(&mut params, &x, true).unwrap();
        let cache = cache.unwrap();
        let gy = Matrix::from_fn(5, 2, |_, _| rng.gen_range(-1.0..1.0));
        let (_, grads) = batchnorm_backward(&params, &cache, &gy).unwrap();
        for j in 0..2 {
            let direct: f64 = (0..5).map(|r| gy.get(r, j) * cache.x_hat.get(r, j)).sum();
            assert!((grads.gamma.get(0, j) - direct).abs() < 1e-12);
        }
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut rng = seeded(13);
        let (batch, dim) = (4, 3);
        let mut params = BatchNormParams::new(dim);
        for j in 0..dim {
            params.gamma.set(0, j, rng.gen_range(0.5..1.5));
            params.beta.set(0, j, rng.gen_range(-0.5..0.5));
        }
        let mut x = Matrix::from_fn(batch, dim, |_, _| rng.gen_range(-2.0..2.0));
        let proj = Matrix::from_fn(batch, dim, |_, _| rng.gen_range(-1.0..1.0));

        let loss = |params: &BatchNormParams, x: &Matrix| -> f64 {
            let mut p = params.clone();
            let (y, _) = batchnorm_forward(&mut p, x, true).unwrap();
            y.data().iter().zip(proj.data()).map(|(a, b)| a * b).sum()
        };

        let mut p = params.clone();
        let (_, cache) = batchnorm_forward(&mut p, &x, true).unwrap();
        let (gx, grads) = batchnorm_backward(&params, &cache.unwrap(), &proj).unwrap();

        let h = 1e-5;
        let check = |analytic: f64, numeric: f64| {
            let denom = analytic.abs().max(numeric.abs()).max(1e-6);
            assert!(
                (analytic - numeric).abs() / denom < 1e-4,
                "analytic {analytic} vs numeric {numeric}"
            );
        };

        for idx in 0..x.len() {
            let orig = x.data()[idx];
            x.data_mut()[idx] = orig + h;
            let up = loss(&params, &x);
            x.data_mut()[idx] = orig - h;
            let down = loss(&params, &x);
            x.data_mut()[idx] = orig;
            check(gx.data()[idx], (up - down) / (2.0 * h));
        }
        for j in 0..dim {
            for gamma_side in [true, false] {
                let orig = if gamma_side {
                    params.gamma.get(0, j)
                } else {
                    params.beta.get(0, j)
                };
                let slot = |p: &mut BatchNormParams, v: f64| {
                    if gamma_side {
                        p.gamma.set(0, j, v)
                    } else {
                        p.beta.set(0, j, v)
                    }
                };
                slot(&mut params, orig + h);
                let up = loss(&params, &x);
                slot(&mut params, orig - h);
                let down = loss(&params, &x);
                slot(&mut params, orig);
                let analytic = if gamma_side {
                    grads.gamma.get(0, j)
                } else {
                    grads.beta.get(0, j)
                };
                check(analytic, (up - down) / (2.0 * h));
            }
        }
    }
}
