//! Confusion-matrix-derived evaluation.
//!
//! Multiclass sensitivity/specificity follow the ICBHI convention:
//! specificity is the Healthy-class recall, sensitivity the support-weighted
//! mean recall over the remaining classes, and the ICBHI score their mean.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Rows are truth, columns are prediction.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: Vec<Vec<u64>>,
    pub class_names: Vec<String>,
}

impl ConfusionMatrix {
    pub fn n_classes(&self) -> usize {
        self.counts.len()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn row_sum(&self, i: usize) -> u64 {
        self.counts[i].iter().sum()
    }

    pub fn col_sum(&self, j: usize) -> u64 {
        self.counts.iter().map(|r| r[j]).sum()
    }
}

/// Count (truth, prediction) pairs into an `n x n` matrix.
pub fn confusion(truth: &[usize], predicted: &[usize], n: usize, class_names: &[String]) -> Result<ConfusionMatrix> {
    if truth.len() != predicted.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} truth labels vs {} predictions",
            truth.len(),
            predicted.len()
        )));
    }
    let mut counts = vec![vec![0u64; n]; n];
    for (&t, &p) in truth.iter().zip(predicted) {
        if t >= n {
            return Err(Error::LabelOutOfRange { got: t, classes: n });
        }
        if p >= n {
            return Err(Error::LabelOutOfRange { got: p, classes: n });
        }
        counts[t][p] += 1;
    }
    let class_names = if class_names.len() == n {
        class_names.to_vec()
    } else {
        (0..n).map(|i| format!("class{i}")).collect()
    };
    Ok(ConfusionMatrix { counts, class_names })
}

/// Per-class precision/recall/F1 with the class support.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub name: String,
    pub support: u64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Full evaluation report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub accuracy: f64,
    /// Support-weighted mean recall; coincides with `accuracy` by definition.
    pub weighted_accuracy: f64,
    pub per_class: Vec<ClassMetrics>,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
    /// Support-weighted mean recall over non-Healthy classes.
    pub sensitivity: f64,
    /// Recall of the Healthy class.
    pub specificity: f64,
    /// `(sensitivity + specificity) / 2`.
    pub icbhi_score: f64,
}

/// Derive the report from a confusion matrix.
///
/// Empty rows/columns contribute zero recall/precision instead of dividing
/// by zero; F1 is zero when both precision and recall vanish.
pub fn report(cm: &ConfusionMatrix, healthy_index: usize) -> Result<MetricsReport> {
    let n = cm.n_classes();
    let total = cm.total();
    if total == 0 {
        return Err(Error::EmptyMatrix);
    }
    if healthy_index >= n {
        return Err(Error::LabelOutOfRange { got: healthy_index, classes: n });
    }

    let mut per_class = Vec::with_capacity(n);
    for i in 0..n {
        let support = cm.row_sum(i);
        let col = cm.col_sum(i);
        let diag = cm.counts[i][i];
        let recall = if support > 0 { diag as f64 / support as f64 } else { 0.0 };
        let precision = if col > 0 { diag as f64 / col as f64 } else { 0.0 };
        let f1 = if precision + recall > 0.0 { 2.0 * precision * recall / (precision + recall) } else { 0.0 };
        per_class.push(ClassMetrics { name: cm.class_names[i].clone(), support, precision, recall, f1 });
    }

    let trace: u64 = (0..n).map(|i| cm.counts[i][i]).sum();
    let accuracy = trace as f64 / total as f64;
    let weighted_accuracy =
        per_class.iter().map(|c| c.support as f64 * c.recall).sum::<f64>() / total as f64;

    let nf = n as f64;
    let macro_precision = per_class.iter().map(|c| c.precision).sum::<f64>() / nf;
    let macro_recall = per_class.iter().map(|c| c.recall).sum::<f64>() / nf;
    let macro_f1 = per_class.iter().map(|c| c.f1).sum::<f64>() / nf;

    let specificity = per_class[healthy_index].recall;
    let abnormal_support: u64 =
        per_class.iter().enumerate().filter(|(i, _)| *i != healthy_index).map(|(_, c)| c.support).sum();
    let sensitivity = if abnormal_support > 0 {
        per_class
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != healthy_index)
            .map(|(_, c)| c.support as f64 * c.recall)
            .sum::<f64>()
            / abnormal_support as f64
    } else {
        0.0
    };
    let icbhi_score = (sensitivity + specificity) / 2.0;

    Ok(MetricsReport {
        accuracy,
        weighted_accuracy,
        per_class,
        macro_precision,
        macro_recall,
        macro_f1,
        sensitivity,
        specificity,
        icbhi_score,
    })
}

/// Render the report as an aligned plain-text table.
pub fn format_report(cm: &ConfusionMatrix, rep: &MetricsReport) -> String {
    let mut out = String::new();
    let name_w = rep.per_class.iter().map(|c| c.name.len()).max().unwrap_or(5).max(5);
    out.push_str(&format!("{:name_w$}  {:>8}  {:>9}  {:>8}  {:>8}\n", "class", "support", "precision", "recall", "f1"));
    for c in &rep.per_class {
        out.push_str(&format!(
            "{:name_w$}  {:>8}  {:>9.4}  {:>8.4}  {:>8.4}\n",
            c.name, c.support, c.precision, c.recall, c.f1
        ));
    }
    out.push('\n');
    out.push_str(&format!("accuracy           {:.4}\n", rep.accuracy));
    out.push_str(&format!("weighted accuracy  {:.4}\n", rep.weighted_accuracy));
    out.push_str(&format!("macro precision    {:.4}\n", rep.macro_precision));
    out.push_str(&format!("macro recall       {:.4}\n", rep.macro_recall));
    out.push_str(&format!("macro F1           {:.4}\n", rep.macro_f1));
    out.push_str(&format!("sensitivity        {:.4}\n", rep.sensitivity));
    out.push_str(&format!("specificity        {:.4}\n", rep.specificity));
    out.push_str(&format!("ICBHI score        {:.4}\n", rep.icbhi_score));
    out.push('\n');
    out.push_str("confusion matrix (rows = truth):\n");
    for (i, row) in cm.counts.iter().enumerate() {
        out.push_str(&format!("{:name_w$}", cm.class_names[i]));
        for v in row {
            out.push_str(&format!("  {v:>6}"));
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("c{i}")).collect()
    }

    #[test]
    fn confusion_counting() {
        let cm = confusion(&[0, 1, 2], &[0, 1, 2], 3, &names(3)).unwrap();
        assert_eq!(cm.counts, vec![vec![1, 0, 0], vec![0, 1, 0], vec![0, 0, 1]]);

        let cm = confusion(&[0, 0], &[1, 1], 2, &names(2)).unwrap();
        assert_eq!(cm.counts[0][1], 2);

        let cm = confusion(&[], &[], 2, &names(2)).unwrap();
        assert_eq!(cm.total(), 0);

        assert!(matches!(confusion(&[0], &[5], 2, &names(2)), Err(Error::LabelOutOfRange { .. })));
        assert!(matches!(confusion(&[0, 1], &[0], 2, &names(2)), Err(Error::ShapeMismatch(_))));
    }

    #[test]
    fn perfect_identity_reports_ones() {
        let cm = confusion(&[0, 1, 2], &[0, 1, 2], 3, &names(3)).unwrap();
        let rep = report(&cm, 0).unwrap();
        assert_eq!(rep.accuracy, 1.0);
        assert_eq!(rep.weighted_accuracy, 1.0);
        assert_eq!(rep.sensitivity, 1.0);
        assert_eq!(rep.specificity, 1.0);
        assert_eq!(rep.icbhi_score, 1.0);
        assert!(rep.per_class.iter().all(|c| c.precision == 1.0 && c.recall == 1.0 && c.f1 == 1.0));
    }

    #[test]
    fn two_class_hand_arithmetic() {
        let cm = ConfusionMatrix {
            counts: vec![vec![8, 2], vec![1, 9]],
            class_names: vec!["Healthy".to_string(), "Abnormal".to_string()],
        };
        let rep = report(&cm, 0).unwrap();
        assert!((rep.specificity - 0.8).abs() < 1e-12);
        assert!((rep.sensitivity - 0.9).abs() < 1e-12);
        assert!((rep.icbhi_score - 0.85).abs() < 1e-12);
        assert!((rep.accuracy - 0.85).abs() < 1e-12);
    }

    #[test]
    fn never_predicted_class_has_zero_precision() {
        // predictor never outputs class 1
        let cm = confusion(&[0, 1, 1], &[0, 0, 0], 2, &names(2)).unwrap();
        let rep = report(&cm, 0).unwrap();
        assert_eq!(rep.per_class[1].precision, 0.0);
        assert_eq!(rep.per_class[1].recall, 0.0);
        assert_eq!(rep.per_class[1].f1, 0.0);
    }

    #[test]
    fn empty_matrix_rejected() {
        let cm = confusion(&[], &[], 3, &names(3)).unwrap();
        assert!(matches!(report(&cm, 0), Err(Error::EmptyMatrix)));
    }

    #[test]
    fn accuracy_equals_weighted_accuracy_identically() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let n = rng.gen_range(2..6);
            let count = rng.gen_range(1..200);
            let truth: Vec<usize> = (0..count).map(|_| rng.gen_range(0..n)).collect();
            let pred: Vec<usize> = (0..count).map(|_| rng.gen_range(0..n)).collect();
            let cm = confusion(&truth, &pred, n, &names(n)).unwrap();
            let rep = report(&cm, 0).unwrap();
            assert!((rep.accuracy - rep.weighted_accuracy).abs() <= 1e-12);
        }
    }

    #[test]
    fn permuting_classes_preserves_aggregates() {
        let truth = [0usize, 0, 1, 1, 2, 2, 2, 0, 1, 2];
        let pred = [0usize, 1, 1, 1, 2, 0, 2, 0, 2, 2];
        let cm = report(&confusion(&truth, &pred, 3, &names(3)).unwrap(), 1).unwrap();

        // permutation (0 1 2) -> (2 0 1); healthy index 1 moves to 0
        let perm = [2usize, 0, 1];
        let truth_p: Vec<usize> = truth.iter().map(|&t| perm[t]).collect();
        let pred_p: Vec<usize> = pred.iter().map(|&p| perm[p]).collect();
        let cm_p = report(&confusion(&truth_p, &pred_p, 3, &names(3)).unwrap(), 0).unwrap();

        assert!((cm.accuracy - cm_p.accuracy).abs() < 1e-15);
        assert!((cm.icbhi_score - cm_p.icbhi_score).abs() < 1e-15);
        for i in 0..3 {
            let j = perm[i];
            assert!((cm.per_class[i].recall - cm_p.per_class[j].recall).abs() < 1e-15);
            assert!((cm.per_class[i].precision - cm_p.per_class[j].precision).abs() < 1e-15);
        }
    }

    #[test]
    fn report_serializes_and_formats() {
        let cm = confusion(&[0, 1, 1], &[0, 1, 0], 2, &names(2)).unwrap();
        let rep = report(&cm, 0).unwrap();
        let json = serde_json::to_string(&rep).unwrap();
        let back: MetricsReport = serde_json::from_str(&json).unwrap();
        assert_eq!(back, rep);
        let table = format_report(&cm, &rep);
        assert!(table.contains("ICBHI score"));
        assert!(table.contains("confusion matrix"));
    }
}
