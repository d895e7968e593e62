//! The replay/exploration training loop: epsilon decay, class-weighted
//! optimization, early stopping, and best-checkpoint retention.

pub mod replay;

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::adam::{adam_step, AdamState};
use crate::nn::loss::{weighted_bce, ClassWeights};
use crate::nn::model::{model_backward, model_forward, ModelParams};
use crate::pipeline::feature::FeatureMatrix;
use crate::pipeline::split::{class_weights, DatasetSplit};
use crate::rng::{substream, Stream};

pub use replay::{apply_exploration_noise, assemble_batch, ReplayMemory, TrainSample};

/// Fixed chunk size for inference passes; outputs are row-independent in
/// inference mode, so this only affects memory use.
const EVAL_BATCH: usize = 256;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub dropout_rate: f64,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    pub noise_sigma: f64,
    /// Defaults to the training-set size when unset.
    pub replay_capacity: Option<usize>,
    pub seed: u64,
    /// Both off reduces the loop to the plain sequential-batch baseline.
    pub replay_enabled: bool,
    pub exploration_enabled: bool,
    /// Weight the loss by inverse class frequency of the training labels.
    pub use_class_weights: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.001,
            batch_size: 32,
            max_epochs: 50,
            patience: 10,
            dropout_rate: 0.2,
            epsilon_start: 1.0,
            epsilon_end: 0.01,
            noise_sigma: 0.1,
            replay_capacity: None,
            seed: 0,
            replay_enabled: true,
            exploration_enabled: true,
            use_class_weights: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.learning_rate <= 0.0 {
            return Err(Error::Config("learning_rate must be > 0".to_string()));
        }
        if self.batch_size < 2 {
            return Err(Error::Config("batch_size must be >= 2".to_string()));
        }
        if self.max_epochs == 0 {
            return Err(Error::Config("max_epochs must be >= 1".to_string()));
        }
        if self.patience > self.max_epochs {
            return Err(Error::Config(format!(
                "patience {} exceeds max_epochs {}",
                self.patience, self.max_epochs
            )));
        }
        if !(0.0 < self.epsilon_end
            && self.epsilon_end <= self.epsilon_start
            && self.epsilon_start <= 1.0)
        {
            return Err(Error::Config(format!(
                "epsilon schedule requires 0 < end <= start <= 1, got {} -> {}",
                self.epsilon_start, self.epsilon_end
            )));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::Config("dropout_rate must be in [0, 1)".to_string()));
        }
        if self.noise_sigma < 0.0 {
            return Err(Error::Config("noise_sigma must be >= 0".to_string()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub epsilon: f64,
    pub seconds: f64,
}

/// History CSV (`epoch,train_loss,val_loss,epsilon,seconds`). The seconds
/// column is wall time and varies between reruns.
pub fn history_to_csv(history: &[EpochStats]) -> String {
    let mut out = String::from("epoch,train_loss,val_loss,epsilon,seconds\n");
    for s in history {
        out.push_str(&format!(
            "{},{:.6},{:.6},{:.6},{:.3}\n",
            s.epoch, s.train_loss, s.val_loss, s.epsilon, s.seconds
        ));
    }
    out
}

/// The retained best model plus everything needed to reuse it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub params: ModelParams,
    pub schema_digest: String,
    pub config: TrainConfig,
    pub best_epoch: usize,
    pub val_loss: f64,
}

/// Exponential decay from epsilon_start to epsilon_end across the epoch
/// range; constant when there is a single epoch.
pub fn epsilon_schedule(epoch: usize, config: &TrainConfig) -> Result<f64> {
    if epoch >= config.max_epochs {
        return Err(Error::IndexOutOfRange(format!(
            "epoch {} outside 0..{}",
            epoch, config.max_epochs
        )));
    }
    if config.max_epochs == 1 || epoch == 0 {
        return Ok(config.epsilon_start);
    }
    if epoch == config.max_epochs - 1 {
        return Ok(config.epsilon_end);
    }
    let fraction = epoch as f64 / (config.max_epochs - 1) as f64;
    Ok(config.epsilon_start * (config.epsilon_end / config.epsilon_start).powf(fraction))
}

/// Strict-improvement early stopping.
#[derive(Debug)]
pub struct EarlyStopper {
    patience: usize,
    best: Option<(usize, f64)>,
    since_improvement: usize,
}

#[derive(Debug, PartialEq, Eq)]
pub enum StopDecision {
    Improved,
    Continue,
    Stop,
}

impl EarlyStopper {
    pub fn new(patience: usize) -> Self {
        Self {
            patience,
            best: None,
            since_improvement: 0,
        }
    }

    pub fn best(&self) -> Option<(usize, f64)> {
        self.best
    }

    pub fn record(&mut self, epoch: usize, val_loss: f64) -> StopDecision {
        match self.best {
            Some((_, best)) if val_loss >= best => {
                self.since_improvement += 1;
                if self.since_improvement >= self.patience {
                    StopDecision::Stop
                } else {
                    StopDecision::Continue
                }
            }
            _ => {
                self.best = Some((epoch, val_loss));
                self.since_improvement = 0;
                StopDecision::Improved
            }
        }
    }
}

/// Inference probabilities for every session in the matrix. Rows are
/// processed in equal-sequence-length groups so no padding is involved;
/// outputs are independent of the grouping.
pub fn predict_probs(params: &ModelParams, matrix: &FeatureMatrix) -> Result<Vec<f64>> {
    let mut params = params.clone();
    predict_probs_mut(&mut params, matrix)
}

fn predict_probs_mut(params: &mut ModelParams, matrix: &FeatureMatrix) -> Result<Vec<f64>> {
    let n = matrix.n_sessions();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by_key(|&i| matrix.session_len(i));
    let mut probs = vec![0.0; n];
    let mut rng = substream(0, Stream::Dropout); // never drawn in inference

    let mut start = 0;
    while start < n {
        let len = matrix.session_len(order[start]);
        let mut end = start;
        while end < n && matrix.session_len(order[end]) == len {
            end += 1;
        }
        for chunk in order[start..end].chunks(EVAL_BATCH) {
            let samples: Vec<TrainSample> = chunk
                .iter()
                .map(|&i| TrainSample::from_matrix(matrix, i))
                .collect();
            let (timesteps, _) = assemble_batch(&samples);
            let (batch_probs, _) = model_forward(params, &timesteps, false, &mut rng)?;
            for (&session, p) in chunk.iter().zip(batch_probs) {
                probs[session] = p;
            }
        }
        start = end;
    }
    Ok(probs)
}

/// Mean weighted BCE of the model on a matrix, in inference mode.
pub fn evaluate_loss(
    params: &ModelParams,
    matrix: &FeatureMatrix,
    weights: ClassWeights,
) -> Result<f64> {
    let probs = predict_probs(params, matrix)?;
    weighted_bce(&probs, &matrix.labels, weights)
}

/// Runs the full loop and returns the best checkpoint plus per-epoch history.
pub fn train(
    config: &TrainConfig,
    splits: &DatasetSplit,
    initial: ModelParams,
) -> Result<(Checkpoint, Vec<EpochStats>)> {
    let mut history = Vec::new();
    let checkpoint = train_into(config, splits, initial, &mut history)?;
    Ok((checkpoint, history))
}

/// As [`train`], but appends completed-epoch stats to a caller-owned sink,
/// so a divergence abort still leaves the partial history available.
pub fn train_into(
    config: &TrainConfig,
    splits: &DatasetSplit,
    initial: ModelParams,
    history: &mut Vec<EpochStats>,
) -> Result<Checkpoint> {
    config.validate()?;
    let n_train = splits.train.n_sessions();
    if n_train < config.batch_size {
        return Err(Error::Config(format!(
            "training set has {} sessions, smaller than batch_size {}",
            n_train, config.batch_size
        )));
    }
    if initial.state_size() != splits.train.width() {
        return Err(Error::InvalidDimension(format!(
            "model state_size {} does not match feature width {}",
            initial.state_size(),
            splits.train.width()
        )));
    }

    let weights = if config.use_class_weights {
        class_weights(&splits.train.labels)?
    } else {
        ClassWeights::uniform()
    };

    let samples: Vec<TrainSample> = (0..n_train)
        .map(|i| TrainSample::from_matrix(&splits.train, i))
        .collect();

    let mut params = initial;
    params.dropout_rate = config.dropout_rate;
    let mut adam = AdamState::new(&params);
    let mut sampling_rng = substream(config.seed, Stream::Sampling);
    let mut noise_rng = substream(config.seed, Stream::Noise);
    let mut dropout_rng = substream(config.seed, Stream::Dropout);

    let n_batches = n_train.div_ceil(config.batch_size);
    let capacity = config.replay_capacity.unwrap_or(n_train);
    let mut stopper = EarlyStopper::new(config.patience.max(1));
    let mut best: Option<Checkpoint> = None;

    for epoch in 0..config.max_epochs {
        let started = Instant::now();
        let epsilon = epsilon_schedule(epoch, config)?;

        // Refresh the memory from the full training set each epoch; with the
        // default capacity this makes sampling a uniform reshuffle while
        // keeping the capacity knob meaningful.
        let mut memory = if config.replay_enabled {
            let mut memory = ReplayMemory::new(capacity, splits.train.width());
            for sample in &samples {
                memory.remember(sample.clone())?;
            }
            Some(memory)
        } else {
            None
        };

        let mut epoch_loss = 0.0;
        let mut batch_index = 0usize;
        let mut sequential_cursor = 0usize;
        while batch_index < n_batches {
            let mut batch_samples: Vec<TrainSample> = match &mut memory {
                Some(memory) => memory.sample_batch(config.batch_size, &mut sampling_rng)?,
                None => {
                    let remaining = n_train - sequential_cursor;
                    let mut take = config.batch_size.min(remaining);
                    // A trailing single sample cannot pass batch norm; fold
                    // it into this chunk.
                    if remaining - take == 1 {
                        take += 1;
                    }
                    let chunk = samples[sequential_cursor..sequential_cursor + take].to_vec();
                    sequential_cursor += take;
                    chunk
                }
            };
            if config.exploration_enabled {
                apply_exploration_noise(
                    &mut batch_samples,
                    epsilon,
                    config.noise_sigma,
                    &splits.train.layout,
                    &mut noise_rng,
                );
            }

            let (timesteps, labels) = assemble_batch(&batch_samples);
            let (probs, cache) = model_forward(&mut params, &timesteps, true, &mut dropout_rng)?;
            let loss = weighted_bce(&probs, &labels, weights)?;
            if !loss.is_finite() {
                return Err(Error::Divergence {
                    epoch,
                    batch: batch_index,
                    message: format!("training loss is {loss}"),
                });
            }
            let grads = model_backward(&params, cache.as_ref(), &probs, &labels, weights)?;
            adam_step(&mut params, &grads, &mut adam, config.learning_rate)?;
            epoch_loss += loss;

            batch_index += 1;
            if memory.is_none() && sequential_cursor >= n_train {
                break;
            }
        }
        let batches_run = if memory.is_some() {
            n_batches
        } else {
            batch_index
        };
        let train_loss = epoch_loss / batches_run as f64;

        let val_loss = evaluate_loss(&params, &splits.validation, weights)?;
        if !val_loss.is_finite() {
            return Err(Error::Divergence {
                epoch,
                batch: batches_run,
                message: format!("validation loss is {val_loss}"),
            });
        }

        history.push(EpochStats {
            epoch,
            train_loss,
            val_loss,
            epsilon,
            seconds: started.elapsed().as_secs_f64(),
        });
        log::info!(
            "epoch {epoch}: train_loss {train_loss:.6} val_loss {val_loss:.6} epsilon {epsilon:.4}"
        );

        match stopper.record(epoch, val_loss) {
            StopDecision::Improved => {
                best = Some(Checkpoint {
                    params: params.clone(),
                    schema_digest: splits.train.schema_digest.clone(),
                    config: config.clone(),
                    best_epoch: epoch,
                    val_loss,
                });
            }
            StopDecision::Continue => {}
            StopDecision::Stop => break,
        }
    }

    Ok(best.expect("at least one epoch ran"))
}
