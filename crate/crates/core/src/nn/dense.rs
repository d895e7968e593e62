//! Dense affine layer: y = x · W^T + b.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::lstm::glorot;
use crate::tensor::Matrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseParams {
    /// out x in.
    pub w: Matrix,
    /// 1 x out.
    pub b: Matrix,
}

impl DenseParams {
    pub fn init(in_dim: usize, out_dim: usize, rng: &mut impl Rng) -> Result<Self> {
        if in_dim == 0 || out_dim == 0 {
            return Err(Error::InvalidDimension(
                "dense dims must be >= 1".to_string(),
            ));
        }
        Ok(Self {
            w: glorot(out_dim, in_dim, rng),
            b: Matrix::zeros(1, out_dim),
        })
    }

    pub fn in_dim(&self) -> usize {
        self.w.cols()
    }

    pub fn out_dim(&self) -> usize {
        self.w.rows()
    }
}

#[derive(Debug, Clone)]
pub struct DenseGrads {
    pub w: Matrix,
    pub b: Matrix,
}

impl DenseGrads {
    pub fn zeros_like(p: &DenseParams) -> Self {
        Self {
            w: Matrix::zeros(p.w.rows(), p.w.cols()),
            b: Matrix::zeros(1, p.b.cols()),
        }
    }
}

pub fn dense_forward(params: &DenseParams, x: &Matrix) -> Result<Matrix> {
    if x.cols() != params.in_dim() {
        return Err(Error::InvalidDimension(format!(
            "dense input width {} does not match {}",
            x.cols(),
            params.in_dim()
        )));
    }
    let mut y = x.matmul_bt(&params.w);
    y.add_row_broadcast(&params.b);
    Ok(y)
}

/// Returns (grad_x, grads) for upstream gradient `grad_y` and the forward
/// input `x`.
pub fn dense_backward(params: &DenseParams, x: &Matrix, grad_y: &Matrix) -> (Matrix, DenseGrads) {
    debug_assert_eq!(grad_y.cols(), params.out_dim());
    debug_assert_eq!(x.rows(), grad_y.rows());
    let grads = DenseGrads {
        w: grad_y.matmul_at(x),
        b: grad_y.col_sums(),
    };
    (grad_y.matmul(&params.w), grads)
}
