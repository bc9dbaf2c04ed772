//! Evaluation surface: classification metrics, latency benchmarking, and
//! weight-spectrum diagnostics.

pub mod bench;
pub mod spectrum;

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("label {label} out of range for {n_classes} classes")]
    LabelOutOfRange { label: usize, n_classes: usize },
    #[error("degenerate class: need at least one positive and one negative")]
    DegenerateClass,
    #[error("power-law fit failed: {reason}")]
    FitFailed { reason: String },
}

/// Per-class row of a classification report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub name: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
    pub auc: Option<f64>,
}

/// Full classification report over all classes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub classes: Vec<ClassMetrics>,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
    pub weighted_precision: f64,
    pub weighted_recall: f64,
    pub weighted_f1: f64,
    pub accuracy: f64,
    pub total_support: usize,
    pub confusion: Vec<Vec<usize>>,
}

/// Counts of (true class, predicted class) pairs; `cell[i][j]` is the number
/// of samples with true class `i` predicted as `j`.
pub fn confusion_matrix(
    y_true: &[usize],
    y_pred: &[usize],
    n_classes: usize,
) -> Result<Vec<Vec<usize>>, EvalError> {
    if y_true.len() != y_pred.len() {
        return Err(EvalError::LengthMismatch {
            left: y_true.len(),
            right: y_pred.len(),
        });
    }
    let mut m = vec![vec![0usize; n_classes]; n_classes];
    for (&t, &p) in y_true.iter().zip(y_pred) {
        for label in [t, p] {
            if label >= n_classes {
                return Err(EvalError::LabelOutOfRange { label, n_classes });
            }
        }
        m[t][p] += 1;
    }
    Ok(m)
}

/// One-vs-rest ROC AUC by the rank statistic: the probability that a random
/// positive outscores a random negative, ties counting one half.
pub fn roc_auc(y_true: &[bool], scores: &[f64]) -> Result<f64, EvalError> {
    if y_true.len() != scores.len() {
        return Err(EvalError::LengthMismatch {
            left: y_true.len(),
            right: scores.len(),
        });
    }
    let n_pos = y_true.iter().filter(|&&t| t).count();
    let n_neg = y_true.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(EvalError::DegenerateClass);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).expect("finite scores"));
    // Average ranks over tie groups (1-based).
    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            j += 1;
        }
        let avg_rank = ((i + 1) + j) as f64 / 2.0;
        for &idx in &order[i..j] {
            if y_true[idx] {
                rank_sum_pos += avg_rank;
            }
        }
        i = j;
    }
    let p = n_pos as f64;
    Ok((rank_sum_pos - p * (p + 1.0) / 2.0) / (p * n_neg as f64))
}

/// Builds the full report: per-class precision/recall/F1/support (zero where
/// the denominator is zero), macro and support-weighted averages, accuracy,
/// the confusion matrix, and one-vs-rest AUC per class when probability rows
/// are supplied. Classes that are entirely absent from the truth or score
/// side get no AUC.
pub fn classification_report(
    y_true: &[usize],
    y_pred: &[usize],
    y_prob: Option<&Array2<f64>>,
    class_names: &[String],
) -> Result<EvalReport, EvalError> {
    let n_classes = class_names.len();
    let confusion = confusion_matrix(y_true, y_pred, n_classes)?;
    if let Some(probs) = y_prob {
        if probs.nrows() != y_true.len() || probs.ncols() != n_classes {
            return Err(EvalError::LengthMismatch {
                left: probs.nrows(),
                right: y_true.len(),
            });
        }
    }

    let total: usize = y_true.len();
    let mut classes = Vec::with_capacity(n_classes);
    for c in 0..n_classes {
        let tp = confusion[c][c];
        let fp: usize = (0..n_classes).filter(|&r| r != c).map(|r| confusion[r][c]).sum();
        let fn_: usize = (0..n_classes).filter(|&p| p != c).map(|p| confusion[c][p]).sum();
        let support: usize = confusion[c].iter().sum();
        let precision = ratio(tp, tp + fp);
        let recall = ratio(tp, tp + fn_);
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        let auc = y_prob.and_then(|probs| {
            let labels: Vec<bool> = y_true.iter().map(|&t| t == c).collect();
            let scores: Vec<f64> = (0..total).map(|i| probs[[i, c]]).collect();
            roc_auc(&labels, &scores).ok()
        });
        classes.push(ClassMetrics {
            name: class_names[c].clone(),
            precision,
            recall,
            f1,
            support,
            auc,
        });
    }

    let k = n_classes as f64;
    let macro_precision = classes.iter().map(|m| m.precision).sum::<f64>() / k;
    let macro_recall = classes.iter().map(|m| m.recall).sum::<f64>() / k;
    let macro_f1 = classes.iter().map(|m| m.f1).sum::<f64>() / k;
    let tf = total.max(1) as f64;
    let weighted_precision = classes
        .iter()
        .map(|m| m.precision * m.support as f64)
        .sum::<f64>()
        / tf;
    let weighted_recall = classes
        .iter()
        .map(|m| m.recall * m.support as f64)
        .sum::<f64>()
        / tf;
    let weighted_f1 = classes.iter().map(|m| m.f1 * m.support as f64).sum::<f64>() / tf;
    let correct: usize = (0..n_classes).map(|c| confusion[c][c]).sum();
    let accuracy = correct as f64 / tf;

    Ok(EvalReport {
        classes,
        macro_precision,
        macro_recall,
        macro_f1,
        weighted_precision,
        weighted_recall,
        weighted_f1,
        accuracy,
        total_support: total,
        confusion,
    })
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

impl EvalReport {
    /// Confusion matrix as CSV with class-name header and row labels.
    pub fn confusion_csv(&self) -> String {
        let mut out = String::from("class");
        for m in &self.classes {
            out.push(',');
            out.push_str(&m.name);
        }
        out.push('\n');
        for (i, row) in self.confusion.iter().enumerate() {
            out.push_str(&self.classes[i].name);
            for v in row {
                out.push_str(&format!(",{v}"));
            }
            out.push('\n');
        }
        out
    }
}

impl std::fmt::Display for EvalReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(
            f,
            "{:<24} {:>9} {:>9} {:>9} {:>9}",
            "Class", "Precision", "Recall", "F1-Score", "Support"
        )?;
        for m in &self.classes {
            writeln!(
                f,
                "{:<24} {:>9.2} {:>9.2} {:>9.2} {:>9}",
                m.name, m.precision, m.recall, m.f1, m.support
            )?;
        }
        writeln!(
            f,
            "{:<24} {:>9.2} {:>9.2} {:>9.2} {:>9}",
            "Macro Avg", self.macro_precision, self.macro_recall, self.macro_f1, self.total_support
        )?;
        writeln!(
            f,
            "{:<24} {:>9.2} {:>9.2} {:>9.2} {:>9}",
            "Weighted Avg",
            self.weighted_precision,
            self.weighted_recall,
            self.weighted_f1,
            self.total_support
        )?;
        writeln!(f, "Accuracy: {:.4}", self.accuracy)?;
        if self.classes.iter().any(|m| m.auc.is_some()) {
            writeln!(f, "\n{:<24} {:>9}", "Class", "ROC AUC")?;
            for m in &self.classes {
                match m.auc {
                    Some(auc) => writeln!(f, "{:<24} {:>9.6}", m.name, auc)?,
                    None => writeln!(f, "{:<24} {:>9}", m.name, "-")?,
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn names(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("class{i}")).collect()
    }

    #[test]
    fn all_correct_two_classes() {
        let y = vec![0, 1, 0, 1];
        let r = classification_report(&y, &y, None, &names(2)).unwrap();
        for m in &r.classes {
            assert_eq!(m.precision, 1.0);
            assert_eq!(m.recall, 1.0);
            assert_eq!(m.f1, 1.0);
        }
        assert_eq!(r.accuracy, 1.0);
    }

    #[test]
    fn never_predicted_class_scores_zero() {
        // Class 1 exists in truth but is never predicted and never right.
        let y_true = vec![0, 0, 1, 1];
        let y_pred = vec![0, 0, 0, 0];
        let r = classification_report(&y_true, &y_pred, None, &names(2)).unwrap();
        let m = &r.classes[1];
        assert_eq!((m.precision, m.recall, m.f1), (0.0, 0.0, 0.0));
        assert_eq!(m.support, 2);
    }

    #[test]
    fn nine_sample_fixture_matches_hand_count() {
        // Confusion (rows true): [[2,1,1],[1,2,0],[0,0,2]]
        let y_true = vec![0, 0, 0, 0, 1, 1, 1, 2, 2];
        let y_pred = vec![0, 0, 1, 2, 1, 1, 0, 2, 2];
        let r = classification_report(&y_true, &y_pred, None, &names(3)).unwrap();
        assert_eq!(r.confusion, vec![vec![2, 1, 1], vec![1, 2, 0], vec![0, 0, 2]]);
        let close = |a: f64, b: f64| (a - b).abs() < 1e-15;
        // class0: TP 2, FP 1, FN 2
        assert!(close(r.classes[0].precision, 2.0 / 3.0));
        assert!(close(r.classes[0].recall, 0.5));
        assert!(close(r.classes[0].f1, 4.0 / 7.0));
        assert_eq!(r.classes[0].support, 4);
        // class1: TP 2, FP 1, FN 1
        assert!(close(r.classes[1].precision, 2.0 / 3.0));
        assert!(close(r.classes[1].recall, 2.0 / 3.0));
        assert!(close(r.classes[1].f1, 2.0 / 3.0));
        // class2: TP 2, FP 1, FN 0
        assert!(close(r.classes[2].precision, 2.0 / 3.0));
        assert!(close(r.classes[2].recall, 1.0));
        assert!(close(r.classes[2].f1, 4.0 / 5.0));
        // aggregates
        assert!(close(r.accuracy, 2.0 / 3.0));
        assert!(close(r.macro_precision, 2.0 / 3.0));
        assert!(close(r.macro_recall, (0.5 + 2.0 / 3.0 + 1.0) / 3.0));
        assert!(close(r.macro_f1, 214.0 / 315.0));
        assert!(close(r.weighted_precision, 2.0 / 3.0));
        assert!(close(r.weighted_recall, 2.0 / 3.0));
        assert!(close(r.weighted_f1, 206.0 / 315.0));
    }

    #[test]
    fn confusion_shapes_and_conservation() {
        let y_true = vec![0, 1, 2, 2];
        let diag = confusion_matrix(&y_true, &y_true, 3).unwrap();
        assert_eq!(diag, vec![vec![1, 0, 0], vec![0, 1, 0], vec![0, 0, 2]]);

        let zeros = vec![0, 0, 0, 0];
        let col = confusion_matrix(&y_true, &zeros, 3).unwrap();
        for (i, row) in col.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                if j == 0 {
                    assert_eq!(v, y_true.iter().filter(|&&t| t == i).count());
                } else {
                    assert_eq!(v, 0);
                }
            }
        }
        let total: usize = col.iter().flatten().sum();
        assert_eq!(total, 4);
    }

    #[test]
    fn errors_are_reported() {
        assert!(matches!(
            confusion_matrix(&[0, 1], &[0], 2),
            Err(EvalError::LengthMismatch { .. })
        ));
        assert!(matches!(
            confusion_matrix(&[0, 5], &[0, 1], 2),
            Err(EvalError::LabelOutOfRange { label: 5, .. })
        ));
        assert!(matches!(
            roc_auc(&[true, true], &[0.1, 0.2]),
            Err(EvalError::DegenerateClass)
        ));
    }

    #[test]
    fn auc_perfect_and_all_ties() {
        let auc = roc_auc(&[true, true, false, false], &[0.9, 0.8, 0.2, 0.1]).unwrap();
        assert_eq!(auc, 1.0);
        let auc = roc_auc(&[true, false, true, false], &[0.5, 0.5, 0.5, 0.5]).unwrap();
        assert_eq!(auc, 0.5);
    }

    /// Exhaustive pair enumeration: P(score_pos > score_neg) + 0.5 P(tie).
    fn auc_by_pairs(y: &[bool], s: &[f64]) -> f64 {
        let mut wins = 0.0;
        let mut pairs = 0.0;
        for (i, &yi) in y.iter().enumerate() {
            if !yi {
                continue;
            }
            for (j, &yj) in y.iter().enumerate() {
                if yj {
                    continue;
                }
                pairs += 1.0;
                if s[i] > s[j] {
                    wins += 1.0;
                } else if s[i] == s[j] {
                    wins += 0.5;
                }
            }
        }
        wins / pairs
    }

    #[test]
    fn six_sample_auc_matches_pair_enumeration() {
        let y = [true, false, true, true, false, false];
        let s = [0.9, 0.8, 0.8, 0.3, 0.2, 0.1];
        let expect = auc_by_pairs(&y, &s);
        assert!((expect - 5.0 / 6.0).abs() < 1e-15);
        let auc = roc_auc(&y, &s).unwrap();
        assert!((auc - expect).abs() < 1e-12);
    }

    #[test]
    fn accuracy_equals_trace_over_total() {
        let y_true = vec![0, 1, 2, 0, 1, 2, 0];
        let y_pred = vec![0, 2, 2, 1, 1, 0, 0];
        let r = classification_report(&y_true, &y_pred, None, &names(3)).unwrap();
        let trace: usize = (0..3).map(|c| r.confusion[c][c]).sum();
        let total: usize = r.confusion.iter().flatten().sum();
        assert_eq!(r.accuracy, trace as f64 / total as f64);
    }

    proptest! {
        #[test]
        fn auc_is_invariant_under_monotone_transforms(
            seed in 0u64..500,
        ) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let n = rng.gen_range(4..40);
            let y: Vec<bool> = (0..n).map(|i| i % 2 == 0).collect();
            let s: Vec<f64> = (0..n).map(|_| (rng.gen_range(0..20) as f64) / 10.0).collect();
            let a1 = roc_auc(&y, &s).unwrap();
            let transformed: Vec<f64> = s.iter().map(|&v| (3.0 * v + 1.0).exp()).collect();
            let a2 = roc_auc(&y, &transformed).unwrap();
            prop_assert!((a1 - a2).abs() < 1e-12);
            prop_assert!((a1 - auc_by_pairs(&y, &s)).abs() < 1e-12);
        }

        #[test]
        fn weighted_averages_are_support_weighted_sums(seed in 0u64..200) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let n = rng.gen_range(5..60);
            let k = rng.gen_range(2..6usize);
            let y_true: Vec<usize> = (0..n).map(|_| rng.gen_range(0..k)).collect();
            let y_pred: Vec<usize> = (0..n).map(|_| rng.gen_range(0..k)).collect();
            let r = classification_report(&y_true, &y_pred, None, &names(k)).unwrap();
            let total: f64 = n as f64;
            let wp: f64 = r.classes.iter().map(|m| m.precision * m.support as f64 / total).sum();
            let wr: f64 = r.classes.iter().map(|m| m.recall * m.support as f64 / total).sum();
            let wf: f64 = r.classes.iter().map(|m| m.f1 * m.support as f64 / total).sum();
            prop_assert!((r.weighted_precision - wp).abs() < 1e-12);
            prop_assert!((r.weighted_recall - wr).abs() < 1e-12);
            prop_assert!((r.weighted_f1 - wf).abs() < 1e-12);
            // Row sums equal supports.
            for (c, m) in r.classes.iter().enumerate() {
                prop_assert_eq!(r.confusion[c].iter().sum::<usize>(), m.support);
            }
        }
    }

    #[test]
    fn report_renders_table_and_csv() {
        let y_true = vec![0, 0, 1];
        let y_pred = vec![0, 1, 1];
        let probs = Array2::from_shape_vec(
            (3, 2),
            vec![0.9, 0.1, 0.4, 0.6, 0.2, 0.8],
        )
        .unwrap();
        let r =
            classification_report(&y_true, &y_pred, Some(&probs), &names(2)).unwrap();
        let text = r.to_string();
        assert!(text.contains("Class"));
        assert!(text.contains("Weighted Avg"));
        assert!(text.contains("ROC AUC"));
        let csv = r.confusion_csv();
        assert!(csv.starts_with("class,class0,class1"));
        assert!(r.classes[0].auc.is_some());
        let json = serde_json::to_string(&r).unwrap();
        assert!(json.contains("\"accuracy\""));
    }
}
