//! Inverted dropout: kept entries are scaled by 1/(1-rate) at train time so
//! inference is the identity.

use rand::Rng;

use crate::error::{Error, Result};
use crate::tensor::Matrix;

/// Returns the dropped-out activations and, in training mode, the mask
/// (entries are 0 or 1/(1-rate)) needed for the backward pass.
pub fn dropout_forward(
    x: &Matrix,
    rate: f64,
    rng: &mut impl Rng,
    training: bool,
) -> Result<(Matrix, Option<Matrix>)> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::InvalidRate(format!(
            "dropout rate must be in [0, 1), got {rate}"
        )));
    }
    if !training || rate == 0.0 {
        let mask = training.then(|| Matrix::filled(x.rows(), x.cols(), 1.0));
        return Ok((x.clone(), mask));
    }
    let keep = 1.0 - rate;
    let scale = 1.0 / keep;
    let mask = Matrix::from_fn(x.rows(), x.cols(), |_, _| {
        if rng.gen::<f64>() < keep {
            scale
        } else {
            0.0
        }
    });
    Ok((x.zip_map(&mask, |v, m| v * m), Some(mask)))
}

pub fn dropout_backward(grad_y: &Matrix, mask: &Matrix) -> Matrix {
    grad_y.zip_map(mask, |g, m| g * m)
}
