//! Logistic regression on flat features and the model-comparison table.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{confusion, report, roc_auc};
use crate::nn::adam::{adam_update_tensor, ADAM_EPS, BETA1, BETA2};
use crate::nn::loss::{weighted_bce, weighted_bce_grad, ClassWeights};
use crate::pipeline::feature::FeatureMatrix;
use crate::pipeline::split::DatasetSplit;
use crate::tensor::{sigmoid, Matrix};
use crate::trainer::{predict_probs, Checkpoint};

/// Thresholds reported for the main model in the comparison table.
pub const COMPARE_THRESHOLDS: [f64; 4] = [0.3, 0.5, 0.6, 0.9];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRegParams {
    /// 1 x state_size.
    pub w: Matrix,
    pub b: f64,
}

impl LogRegParams {
    pub fn zeros(width: usize) -> Self {
        Self {
            w: Matrix::zeros(1, width),
            b: 0.0,
        }
    }
}

/// sigma(w.x + b) per row.
pub fn predict_logreg(params: &LogRegParams, rows: &Matrix) -> Result<Vec<f64>> {
    if rows.cols() != params.w.cols() {
        return Err(Error::InvalidDimension(format!(
            "row width {} does not match weight width {}",
            rows.cols(),
            params.w.cols()
        )));
    }
    Ok((0..rows.rows())
        .map(|r| {
            let z: f64 = rows
                .row(r)
                .iter()
                .zip(params.w.row(0))
                .map(|(x, w)| x * w)
                .sum::<f64>()
                + params.b;
            sigmoid(z)
        })
        .collect())
}

/// Loss and gradient of class-weighted BCE with an L2 penalty on the weights
/// (not the bias).
pub fn logreg_loss_grad(
    params: &LogRegParams,
    rows: &Matrix,
    labels: &[f64],
    weights: ClassWeights,
    l2: f64,
) -> Result<(f64, Matrix, f64)> {
    let probs = predict_logreg(params, rows)?;
    let data_loss = weighted_bce(&probs, labels, weights)?;
    let penalty = 0.5 * l2 * params.w.row(0).iter().map(|w| w * w).sum::<f64>();
    let dldp = weighted_bce_grad(&probs, labels, weights)?;

    let mut grad_w = Matrix::zeros(1, params.w.cols());
    let mut grad_b = 0.0;
    for r in 0..rows.rows() {
        let dz = dldp[r] * probs[r] * (1.0 - probs[r]);
        grad_b += dz;
        for (gw, x) in grad_w.row_mut(0).iter_mut().zip(rows.row(r)) {
            *gw += dz * x;
        }
    }
    for (gw, w) in grad_w.row_mut(0).iter_mut().zip(params.w.row(0)) {
        *gw += l2 * w;
    }
    Ok((data_loss + penalty, grad_w, grad_b))
}

/// Full-batch gradient descent from zero init, driven by the shared Adam
/// kernel. Requires flat features (one row per session).
pub fn train_logreg(
    splits: &DatasetSplit,
    lr: f64,
    epochs: usize,
    weights: ClassWeights,
    l2: f64,
    _seed: u64,
) -> Result<LogRegParams> {
    if lr <= 0.0 {
        return Err(Error::Config("learning rate must be > 0".to_string()));
    }
    let train = &splits.train;
    if train.n_sessions() == 0 {
        return Err(Error::EmptyInput(
            "logistic regression needs training rows".to_string(),
        ));
    }
    if train.n_rows() != train.n_sessions() {
        return Err(Error::InvalidDimension(
            "logistic regression requires flat features (one row per session)".to_string(),
        ));
    }

    let mut params = LogRegParams::zeros(train.width());
    let mut m_w = Matrix::zeros(1, train.width());
    let mut v_w = Matrix::zeros(1, train.width());
    let mut b_param = Matrix::zeros(1, 1);
    let mut m_b = Matrix::zeros(1, 1);
    let mut v_b = Matrix::zeros(1, 1);

    for epoch in 0..epochs {
        let (loss, grad_w, grad_b) =
            logreg_loss_grad(&params, &train.rows, &train.labels, weights, l2)?;
        if !loss.is_finite() {
            return Err(Error::Divergence {
                epoch,
                batch: 0,
                message: format!("logistic regression loss is {loss}"),
            });
        }
        let t = epoch as u64 + 1;
        adam_update_tensor(
            &mut params.w,
            &grad_w,
            &mut m_w,
            &mut v_w,
            t,
            lr,
            BETA1,
            BETA2,
            ADAM_EPS,
        )?;
        let grad_b_m = Matrix::row_vector(vec![grad_b]);
        adam_update_tensor(
            &mut b_param,
            &grad_b_m,
            &mut m_b,
            &mut v_b,
            t,
            lr,
            BETA1,
            BETA2,
            ADAM_EPS,
        )?;
        params.b = b_param.get(0, 0);
    }
    Ok(params)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub model: String,
    pub threshold: f64,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub auc_roc: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonTable {
    pub rows: Vec<ComparisonRow>,
}

fn comparison_rows(
    model: &str,
    probs: &[f64],
    labels: &[f64],
    thresholds: &[f64],
) -> Result<Vec<ComparisonRow>> {
    let auc = roc_auc(probs, labels)?.auc;
    thresholds
        .iter()
        .map(|&t| {
            let r = report(&confusion(probs, labels, t)?)?;
            Ok(ComparisonRow {
                model: model.to_string(),
                threshold: t,
                accuracy: r.accuracy,
                precision: r.class1.precision,
                recall: r.class1.recall,
                f1: r.class1.f1,
                auc_roc: auc,
            })
        })
        .collect()
}

/// Positive-class metrics for each model on the test split; the main model
/// is reported at every requested threshold, baselines at 0.5. AUC is
/// threshold-free and repeats across a model's rows.
pub fn compare(
    model_checkpoint: &Checkpoint,
    logreg: &LogRegParams,
    plain_lstm_checkpoint: &Checkpoint,
    test: &FeatureMatrix,
    thresholds: &[f64],
) -> Result<ComparisonTable> {
    for (name, ckpt) in [
        ("model", model_checkpoint),
        ("plain-lstm", plain_lstm_checkpoint),
    ] {
        if ckpt.schema_digest != test.schema_digest {
            return Err(Error::IncompatibleArtifacts(format!(
                "{name} checkpoint was trained on schema {} but the data has {}",
                ckpt.schema_digest, test.schema_digest
            )));
        }
    }
    if logreg.w.cols() != test.width() {
        return Err(Error::IncompatibleArtifacts(format!(
            "logistic regression width {} does not match feature width {}",
            logreg.w.cols(),
            test.width()
        )));
    }
    if test.n_rows() != test.n_sessions() {
        return Err(Error::InvalidDimension(
            "comparison requires flat features".to_string(),
        ));
    }

    let labels = &test.labels;
    let mut rows = Vec::new();
    rows.extend(comparison_rows(
        "logistic_regression",
        &predict_logreg(logreg, &test.rows)?,
        labels,
        &[0.5],
    )?);
    rows.extend(comparison_rows(
        "plain_lstm",
        &predict_probs(&plain_lstm_checkpoint.params, test)?,
        labels,
        &[0.5],
    )?);
    rows.extend(comparison_rows(
        "replay_lstm",
        &predict_probs(&model_checkpoint.params, test)?,
        labels,
        thresholds,
    )?);
    Ok(ComparisonTable { rows })
}

pub fn comparison_to_csv(table: &ComparisonTable) -> String {
    let mut out = String::from("model,threshold,accuracy,precision,recall,f1,auc_roc\n");
    for r in &table.rows {
        out.push_str(&format!(
            "{},{},{:.4},{:.4},{:.4},{:.4},{:.4}\n",
            r.model, r.threshold, r.accuracy, r.precision, r.recall, r.f1, r.auc_roc
        ));
    }
    out
}

pub fn comparison_to_text(table: &ComparisonTable) -> String {
    let mut out = format!(
        "{:<24} {:>9} {:>9} {:>9} {:>9} {:>9} {:>9}\n",
        "model", "threshold", "accuracy", "precision", "recall", "f1", "auc_roc"
    );
    for r in &table.rows {
        out.push_str(&format!(
            "{:<24} {:>9.2} {:>9.4} {:>9.4} {:>9.4} {:>9.4} {:>9.4}\n",
            r.model, r.threshold, r.accuracy, r.precision, r.recall, r.f1, r.auc_roc
        ));
    }
    out
}
