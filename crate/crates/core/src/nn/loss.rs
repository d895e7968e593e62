//! Class-weighted binary cross-entropy.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Probabilities are clipped to this range before the log.
pub const BCE_CLIP: f64 = 1e-7;

/// Per-class loss weights (negative, positive).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassWeights {
    pub w0: f64,
    pub w1: f64,
}

impl ClassWeights {
    pub fn uniform() -> Self {
        Self { w0: 1.0, w1: 1.0 }
    }

    pub fn for_label(&self, label: f64) -> f64 {
        if label >= 0.5 {
            self.w1
        } else {
            self.w0
        }
    }
}

/// Mean over samples of `-w_y · [y·ln p + (1-y)·ln(1-p)]`.
pub fn weighted_bce(probs: &[f64], labels: &[f64], weights: ClassWeights) -> Result<f64> {
    if probs.len() != labels.len() {
        return Err(Error::InvalidDimension(format!(
            "probs length {} does not match labels length {}",
            probs.len(),
            labels.len()
        )));
    }
    if probs.is_empty() {
        return Err(Error::EmptyInput(
            "weighted_bce on empty vectors".to_string(),
        ));
    }
    let n = probs.len() as f64;
    let mut total = 0.0;
    for (&p, &y) in probs.iter().zip(labels) {
        let p = p.clamp(BCE_CLIP, 1.0 - BCE_CLIP);
        total -= weights.for_label(y) * (y * p.ln() + (1.0 - y) * (1.0 - p).ln());
    }
    Ok(total / n)
}

/// Gradient of [`weighted_bce`] with respect to each probability. Entries
/// whose probability sits in the clipped region get a zero gradient, matching
/// the loss actually computed.
pub fn weighted_bce_grad(probs: &[f64], labels: &[f64], weights: ClassWeights) -> Result<Vec<f64>> {
    if probs.len() != labels.len() {
        return Err(Error::InvalidDimension(format!(
            "probs length {} does not match labels length {}",
            probs.len(),
            labels.len()
        )));
    }
    let n = probs.len() as f64;
    Ok(probs
        .iter()
        .zip(labels)
        .map(|(&p, &y)| {
            if !(BCE_CLIP..=1.0 - BCE_CLIP).contains(&p) {
                0.0
            } else {
                -weights.for_label(y) * (y / p - (1.0 - y) / (1.0 - p)) / n
            }
        })
        .collect())
}
