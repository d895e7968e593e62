//! Experience memory and exploration noise for the training loop.

use std::collections::VecDeque;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::pipeline::feature::FeatureMatrix;
use crate::pipeline::schema::FeatureLayout;
use crate::tensor::Matrix;

/// One training sample: a session's feature rows (seq_len x width,
/// flattened) and its label.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainSample {
    pub features: Vec<f64>,
    pub steps: usize,
    pub width: usize,
    pub label: f64,
}

impl TrainSample {
    pub fn from_matrix(matrix: &FeatureMatrix, session: usize) -> Self {
        Self {
            features: matrix.session_features(session).to_vec(),
            steps: matrix.session_len(session),
            width: matrix.width(),
            label: matrix.labels[session],
        }
    }
}

/// Capacity-bounded ring buffer of training samples; oldest evicted first.
#[derive(Debug)]
pub struct ReplayMemory {
    capacity: usize,
    width: usize,
    buffer: VecDeque<TrainSample>,
    insertions: u64,
}

impl ReplayMemory {
    pub fn new(capacity: usize, width: usize) -> Self {
        Self {
            capacity: capacity.max(1),
            width,
            buffer: VecDeque::with_capacity(capacity.clamp(1, 1 << 20)),
            insertions: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.buffer.len()
    }

    pub fn is_empty(&self) -> bool {
        self.buffer.is_empty()
    }

    /// Total inserts ever, unaffected by eviction.
    pub fn insertions(&self) -> u64 {
        self.insertions
    }

    pub fn clear(&mut self) {
        self.buffer.clear();
    }

    pub fn remember(&mut self, sample: TrainSample) -> Result<()> {
        if sample.width != self.width {
            return Err(Error::InvalidDimension(format!(
                "sample width {} does not match memory width {}",
                sample.width, self.width
            )));
        }
        if self.buffer.len() == self.capacity {
            self.buffer.pop_front();
        }
        self.buffer.push_back(sample);
        self.insertions += 1;
        Ok(())
    }

    /// Uniform sample without replacement within one batch.
    pub fn sample_batch(&self, batch_size: usize, rng: &mut impl Rng) -> Result<Vec<TrainSample>> {
        if self.buffer.len() < batch_size {
            return Err(Error::InsufficientMemory(format!(
                "memory holds {} samples, batch needs {}",
                self.buffer.len(),
                batch_size
            )));
        }
        let mut indices: Vec<usize> = (0..self.buffer.len()).collect();
        for i in 0..batch_size {
            let j = rng.gen_range(i..indices.len());
            indices.swap(i, j);
        }
        Ok(indices[..batch_size]
            .iter()
            .map(|&i| self.buffer[i].clone())
            .collect())
    }

    #[cfg(test)]
    pub fn samples(&self) -> impl Iterator<Item = &TrainSample> {
        self.buffer.iter()
    }
}

/// Per-sample Bernoulli(epsilon) gating; selected samples get Gaussian noise
/// on numeric features only, re-clamped to [0,1]. One-hot groups and labels
/// are never touched.
pub fn apply_exploration_noise(
    samples: &mut [TrainSample],
    epsilon: f64,
    noise_sigma: f64,
    layout: &FeatureLayout,
    rng: &mut impl Rng,
) {
    if epsilon <= 0.0 {
        return;
    }
    let numeric = layout.numeric_columns();
    let normal = if noise_sigma > 0.0 {
        Some(Normal::new(0.0, noise_sigma).expect("finite sigma"))
    } else {
        None
    };
    for sample in samples {
        if !rng.gen_bool(epsilon.min(1.0)) {
            continue;
        }
        let Some(normal) = normal else { continue };
        for step in 0..sample.steps {
            let off = step * sample.width;
            for &col in &numeric {
                let v = &mut sample.features[off + col];
                *v = (*v + normal.sample(rng)).clamp(0.0, 1.0);
            }
        }
    }
}

/// Stacks samples into per-timestep matrices. Shorter sequences are
/// pre-padded with zero rows so every sample ends at the final timestep.
pub fn assemble_batch(samples: &[TrainSample]) -> (Vec<Matrix>, Vec<f64>) {
    let width = samples.first().map_or(0, |s| s.width);
    let t_max = samples.iter().map(|s| s.steps).max().unwrap_or(0);
    let batch = samples.len();
    let mut timesteps = vec![Matrix::zeros(batch, width); t_max];
    for (row, sample) in samples.iter().enumerate() {
        let pad = t_max - sample.steps;
        for step in 0..sample.steps {
            let src = &sample.features[step * width..(step + 1) * width];
            timesteps[pad + step].row_mut(row).copy_from_slice(src);
        }
    }
    let labels = samples.iter().map(|s| s.label).collect();
    (timesteps, labels)
}
