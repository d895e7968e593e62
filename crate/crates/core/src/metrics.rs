//! Classification metrics: confusion matrices, per-class reports, ROC/AUC,
//! and the 0.3-0.9 threshold sweep.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The seven decision thresholds of the standard sweep.
pub const SWEEP_THRESHOLDS: [f64; 7] = [0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tn: u64,
    pub fp: u64,
    pub fn_: u64,
    pub tp: u64,
}

impl ConfusionMatrix {
    pub fn total(&self) -> u64 {
        self.tn + self.fp + self.fn_ + self.tp
    }

    pub fn predicted_positive(&self) -> u64 {
        self.tp + self.fp
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassReport {
    pub class0: ClassMetrics,
    pub class1: ClassMetrics,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    /// (false-positive rate, true-positive rate), from (0,0) to (1,1).
    pub points: Vec<(f64, f64)>,
    pub auc: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdSweep {
    pub rows: Vec<(f64, ClassReport)>,
}

fn check_lengths(probs: &[f64], labels: &[f64]) -> Result<()> {
    if probs.len() != labels.len() {
        return Err(Error::InvalidDimension(format!(
            "probs length {} does not match labels length {}",
            probs.len(),
            labels.len()
        )));
    }
    Ok(())
}

/// Counts with the tie rule p >= threshold -> positive.
pub fn confusion(probs: &[f64], labels: &[f64], threshold: f64) -> Result<ConfusionMatrix> {
    check_lengths(probs, labels)?;
    if !(0.0..=1.0).contains(&threshold) {
        return Err(Error::Config(format!(
            "threshold must be in [0, 1], got {threshold}"
        )));
    }
    let mut cm = ConfusionMatrix {
        tn: 0,
        fp: 0,
        fn_: 0,
        tp: 0,
    };
    for (&p, &y) in probs.iter().zip(labels) {
        let predicted = p >= threshold;
        let actual = y >= 0.5;
        match (actual, predicted) {
            (false, false) => cm.tn += 1,
            (false, true) => cm.fp += 1,
            (true, false) => cm.fn_ += 1,
            (true, true) => cm.tp += 1,
        }
    }
    Ok(cm)
}

fn rate(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn f1_of(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

/// Precision/recall/F1 per class plus accuracy. Zero denominators yield 0.
pub fn report(cm: &ConfusionMatrix) -> Result<ClassReport> {
    if cm.total() == 0 {
        return Err(Error::EmptyInput(
            "report on an empty confusion matrix".to_string(),
        ));
    }
    let p1 = rate(cm.tp, cm.tp + cm.fp);
    let r1 = rate(cm.tp, cm.tp + cm.fn_);
    let p0 = rate(cm.tn, cm.tn + cm.fn_);
    let r0 = rate(cm.tn, cm.tn + cm.fp);
    Ok(ClassReport {
        class0: ClassMetrics {
            precision: p0,
            recall: r0,
            f1: f1_of(p0, r0),
            support: cm.tn + cm.fp,
        },
        class1: ClassMetrics {
            precision: p1,
            recall: r1,
            f1: f1_of(p1, r1),
            support: cm.tp + cm.fn_,
        },
        accuracy: rate(cm.tn + cm.tp, cm.total()),
    })
}

/// ROC curve over all distinct scores (ties grouped into single steps) with
/// trapezoidal AUC; equivalent to the Mann-Whitney statistic with half
/// credit for ties.
pub fn roc_auc(probs: &[f64], labels: &[f64]) -> Result<RocCurve> {
    check_lengths(probs, labels)?;
    let n1 = labels.iter().filter(|&&y| y >= 0.5).count() as u64;
    let n0 = labels.len() as u64 - n1;
    if n0 == 0 || n1 == 0 {
        return Err(Error::DegenerateLabels(format!(
            "roc_auc requires both classes, got {n0} negatives and {n1} positives"
        )));
    }

    let mut order: Vec<usize> = (0..probs.len()).collect();
    order.sort_by(|&a, &b| probs[b].partial_cmp(&probs[a]).expect("finite scores"));

    let mut points = vec![(0.0, 0.0)];
    let mut auc = 0.0;
    let (mut tp, mut fp) = (0u64, 0u64);
    let (mut prev_tp, mut prev_fp) = (0u64, 0u64);
    let mut i = 0;
    while i < order.len() {
        // Consume the whole tie block at this score.
        let score = probs[order[i]];
        while i < order.len() && probs[order[i]] == score {
            if labels[order[i]] >= 0.5 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        let (x0, y0) = (prev_fp as f64 / n0 as f64, prev_tp as f64 / n1 as f64);
        let (x1, y1) = (fp as f64 / n0 as f64, tp as f64 / n1 as f64);
        auc += (x1 - x0) * (y0 + y1) / 2.0;
        points.push((x1, y1));
        prev_tp = tp;
        prev_fp = fp;
    }

    Ok(RocCurve { points, auc })
}

/// One class report per threshold.
pub fn sweep(probs: &[f64], labels: &[f64], thresholds: &[f64]) -> Result<ThresholdSweep> {
    if thresholds.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Config(
            "sweep thresholds must be strictly increasing".to_string(),
        ));
    }
    let mut rows = Vec::with_capacity(thresholds.len());
    for &t in thresholds {
        let cm = confusion(probs, labels, t)?;
        rows.push((t, report(&cm)?));
    }
    Ok(ThresholdSweep { rows })
}

/// Sweep CSV: one row per class per threshold, Table-style columns.
pub fn sweep_to_csv(sweep: &ThresholdSweep) -> String {
    let mut out = String::from("threshold,class,precision,recall,f1,support,accuracy\n");
    for (t, r) in &sweep.rows {
        for (class, m) in [(0, &r.class0), (1, &r.class1)] {
            out.push_str(&format!(
                "{t},{class},{:.4},{:.4},{:.4},{},{:.4}\n",
                m.precision, m.recall, m.f1, m.support, r.accuracy
            ));
        }
    }
    out
}

pub fn report_to_csv(report: &ClassReport) -> String {
    let mut out = String::from("class,precision,recall,f1,support,accuracy\n");
    for (class, m) in [(0, &report.class0), (1, &report.class1)] {
        out.push_str(&format!(
            "{class},{:.4},{:.4},{:.4},{},{:.4}\n",
            m.precision, m.recall, m.f1, m.support, report.accuracy
        ));
    }
    out
}

/// Two-column CSV of the ROC points for external plotting.
pub fn roc_to_csv(curve: &RocCurve) -> String {
    let mut out = String::from("fpr,tpr\n");
    for (x, y) in &curve.points {
        out.push_str(&format!("{x:.6},{y:.6}\n"));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use rand::Rng;

    /// O(n^2) pairwise AUC: (wins + ties/2) / (n1 * n0).
    fn pairwise_auc(probs: &[f64], labels: &[f64]) -> f64 {
        let mut wins = 0.0;
        let mut pairs = 0.0;
        for (i, &pi) in probs.iter().enumerate() {
            if labels[i] < 0.5 {
                continue;
            }
            for (j, &pj) in probs.iter().enumerate() {
                if labels[j] >= 0.5 {
                    continue;
                }
                pairs += 1.0;
                if pi > pj {
                    wins += 1.0;
                } else if pi == pj {
                    wins += 0.5;
                }
            }
        }
        wins / pairs
    }

    #[test]
    fn confusion_counts_simple_case() {
        let cm = confusion(&[0.9, 0.1], &[1.0, 0.0], 0.5).unwrap();
        assert_eq!(
            cm,
            ConfusionMatrix {
                tn: 1,
                fp: 0,
                fn_: 0,
                tp: 1
            }
        );
    }

    #[test]
    fn threshold_zero_predicts_everything_positive() {
        let cm = confusion(&[0.0, 0.3, 0.9], &[0.0, 1.0, 1.0], 0.0).unwrap();
        assert_eq!(cm.tn, 0);
        assert_eq!(cm.fn_, 0);
        assert_eq!(cm.predicted_positive(), 3);
    }

    #[test]
    fn tie_at_threshold_is_positive() {
        let cm = confusion(&[0.5], &[1.0], 0.5).unwrap();
        assert_eq!(cm.tp, 1);
    }

    #[test]
    fn table_three_fixture_reproduces_reported_metrics() {
        let cm = ConfusionMatrix {
            tn: 146_479,
            fp: 994,
            fn_: 20_921,
            tp: 8_640,
        };
        let r = report(&cm).unwrap();
        assert!(
            (r.accuracy - 0.8762).abs() < 1e-4,
            "accuracy {}",
            r.accuracy
        );
        assert!((r.class1.precision - 0.8968).abs() < 1e-3);
        assert!((r.class1.recall - 0.2923).abs() < 1e-3);
        assert!((r.class0.precision - 0.875).abs() < 1e-3);
    }

    #[test]
    fn perfect_predictor_reports_ones() {
        let cm = ConfusionMatrix {
            tn: 10,
            fp: 0,
            fn_: 0,
            tp: 5,
        };
        let r = report(&cm).unwrap();
        for m in [r.class0, r.class1] {
            assert_eq!(m.precision, 1.0);
            assert_eq!(m.recall, 1.0);
            assert_eq!(m.f1, 1.0);
        }
        assert_eq!(r.accuracy, 1.0);
    }

    #[test]
    fn empty_matrix_is_an_error() {
        let cm = ConfusionMatrix {
            tn: 0,
            fp: 0,
            fn_: 0,
            tp: 0,
        };
        assert!(matches!(report(&cm), Err(Error::EmptyInput(_))));
    }

    #[test]
    fn constant_scores_give_half_auc() {
        let curve = roc_auc(&[0.4, 0.4, 0.4, 0.4], &[1.0, 0.0, 1.0, 0.0]).unwrap();
        assert!((curve.auc - 0.5).abs() < 1e-12);
    }

    #[test]
    fn perfect_ordering_gives_auc_one() {
        let curve = roc_auc(&[0.9, 0.8, 0.2, 0.1], &[1.0, 1.0, 0.0, 0.0]).unwrap();
        assert!((curve.auc - 1.0).abs() < 1e-12);
    }

    #[test]
    fn single_class_is_degenerate() {
        assert!(matches!(
            roc_auc(&[0.1, 0.9], &[1.0, 1.0]),
            Err(Error::DegenerateLabels(_))
        ));
    }

    #[test]
    fn curve_endpoints_and_monotonicity() {
        let mut rng = seeded(80);
        let probs: Vec<f64> = (0..200).map(|_| rng.gen_range(0.0..1.0)).collect();
        let labels: Vec<f64> = (0..200).map(|_| f64::from(rng.gen_bool(0.3))).collect();
        let curve = roc_auc(&probs, &labels).unwrap();
        assert_eq!(curve.points.first(), Some(&(0.0, 0.0)));
        let last = curve.points.last().unwrap();
        assert!((last.0 - 1.0).abs() < 1e-12 && (last.1 - 1.0).abs() < 1e-12);
        for w in curve.points.windows(2) {
            assert!(w[1].0 >= w[0].0 && w[1].1 >= w[0].1);
        }
    }

    #[test]
    fn trapezoid_matches_pairwise_oracle_with_heavy_ties() {
        let mut rng = seeded(81);
        for trial in 0..30 {
            let n = rng.gen_range(10..500);
            // Draw from a small discrete grid to force many ties.
            let probs: Vec<f64> = (0..n)
                .map(|_| rng.gen_range(0..=10) as f64 / 10.0)
                .collect();
            let mut labels: Vec<f64> = (0..n).map(|_| f64::from(rng.gen_bool(0.4))).collect();
            labels[0] = 1.0;
            labels[1] = 0.0;
            let curve = roc_auc(&probs, &labels).unwrap();
            let oracle = pairwise_auc(&probs, &labels);
            assert!(
                (curve.auc - oracle).abs() < 1e-9,
                "trial {trial}: trapezoid {} vs pairwise {}",
                curve.auc,
                oracle
            );
        }
    }

    #[test]
    fn auc_is_invariant_under_monotone_transforms() {
        let mut rng = seeded(82);
        let probs: Vec<f64> = (0..300).map(|_| rng.gen_range(0.0..1.0)).collect();
        let mut labels: Vec<f64> = (0..300).map(|_| f64::from(rng.gen_bool(0.25))).collect();
        labels[0] = 1.0;
        labels[1] = 0.0;
        let base = roc_auc(&probs, &labels).unwrap().auc;
        let squashed: Vec<f64> = probs.iter().map(|&p| (3.0 * p - 1.0).tanh()).collect();
        let shifted: Vec<f64> = probs.iter().map(|&p| p * 0.001 + 5.0).collect();
        assert!((roc_auc(&squashed, &labels).unwrap().auc - base).abs() < 1e-12);
        assert!((roc_auc(&shifted, &labels).unwrap().auc - base).abs() < 1e-12);
    }

    #[test]
    fn sweep_has_monotone_counts_and_seven_rows() {
        let mut rng = seeded(83);
        let probs: Vec<f64> = (0..400).map(|_| rng.gen_range(0.0..1.0)).collect();
        let mut labels: Vec<f64> = (0..400).map(|_| f64::from(rng.gen_bool(0.2))).collect();
        labels[0] = 1.0;
        labels[1] = 0.0;
        let s = sweep(&probs, &labels, &SWEEP_THRESHOLDS).unwrap();
        assert_eq!(s.rows.len(), 7);
        let cms: Vec<ConfusionMatrix> = SWEEP_THRESHOLDS
            .iter()
            .map(|&t| confusion(&probs, &labels, t).unwrap())
            .collect();
        for w in cms.windows(2) {
            assert!(w[1].predicted_positive() <= w[0].predicted_positive());
            assert!(w[1].fp <= w[0].fp && w[1].tp <= w[0].tp);
            assert!(w[1].tn >= w[0].tn && w[1].fn_ >= w[0].fn_);
        }
        for w in s.rows.windows(2) {
            assert!(w[1].1.class1.recall <= w[0].1.class1.recall);
        }
        // Recall at threshold 0 is 1 by definition.
        let all_in = report(&confusion(&probs, &labels, 0.0).unwrap()).unwrap();
        assert_eq!(all_in.class1.recall, 1.0);
    }

    #[test]
    fn csv_renders_two_rows_per_threshold() {
        let probs = [0.2, 0.8, 0.6, 0.4];
        let labels = [0.0, 1.0, 1.0, 0.0];
        let s = sweep(&probs, &labels, &SWEEP_THRESHOLDS).unwrap();
        let csv = sweep_to_csv(&s);
        assert_eq!(csv.lines().count(), 1 + 14);
        assert!(csv.starts_with("threshold,class,"));
    }
}
