//! Confusion matrices, precision/recall/F1/accuracy, cross-validated
//! evaluation and the ablation harness.

pub mod crossval;
pub mod report;

pub use crossval::{ablate, cross_validate, AblationOutcome, CrossValConfig, CrossValOutcome, FoldResult, SmoteMode};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Rows are true classes, columns predicted classes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub n_classes: usize,
    pub counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn from_labels(true_labels: &[usize], predicted: &[usize], n_classes: usize) -> Result<Self> {
        if true_labels.len() != predicted.len() {
            return Err(Error::dim("confusion", true_labels.len(), predicted.len()));
        }
        let mut counts = vec![vec![0u64; n_classes]; n_classes];
        for (&t, &p) in true_labels.iter().zip(predicted) {
            if t >= n_classes || p >= n_classes {
                return Err(Error::Index {
                    message: format!("label pair ({t},{p}) out of range for {n_classes} classes"),
                });
            }
            counts[t][p] += 1;
        }
        Ok(ConfusionMatrix { n_classes, counts })
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.n_classes).map(|i| self.counts[i][i]).sum()
    }

    pub fn row_sum(&self, class: usize) -> u64 {
        self.counts[class].iter().sum()
    }

    pub fn col_sum(&self, class: usize) -> u64 {
        self.counts.iter().map(|row| row[class]).sum()
    }

    /// Rows scaled to sum to 1; empty rows stay all-zero.
    pub fn row_normalized(&self) -> Vec<Vec<f64>> {
        self.counts
            .iter()
            .map(|row| {
                let total: u64 = row.iter().sum();
                if total == 0 {
                    vec![0.0; self.n_classes]
                } else {
                    row.iter().map(|&c| c as f64 / total as f64).collect()
                }
            })
            .collect()
    }

    /// Element-wise mean of several matrices (fold averaging).
    pub fn mean_of(matrices: &[&ConfusionMatrix]) -> Vec<Vec<f64>> {
        let n = matrices[0].n_classes;
        let mut mean = vec![vec![0.0f64; n]; n];
        for m in matrices {
            for i in 0..n {
                for j in 0..n {
                    mean[i][j] += m.counts[i][j] as f64;
                }
            }
        }
        let count = matrices.len() as f64;
        mean.iter_mut().flatten().for_each(|v| *v /= count);
        mean
    }
}

/// Aggregation mode for multi-class precision/recall/F1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Averaging {
    /// Unweighted mean over classes.
    Macro,
    /// Support-weighted mean.
    Weighted,
}

impl std::str::FromStr for Averaging {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "macro" => Ok(Averaging::Macro),
            "weighted" => Ok(Averaging::Weighted),
            other => Err(Error::config("averaging", format!("expected macro|weighted, got {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// True-label count for this class.
    pub support: u64,
    /// False when the class never appears in truth or predictions.
    pub defined: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricsReport {
    pub per_class: Vec<ClassMetrics>,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Percent, `trace/total * 100`.
    pub accuracy: f64,
    pub averaging: Averaging,
    pub confusion: ConfusionMatrix,
}

/// Build the one-vs-rest reduction of a multiclass confusion matrix.
pub fn metrics(cm: &ConfusionMatrix, averaging: Averaging) -> Result<MetricsReport> {
    let total = cm.total();
    if total == 0 {
        return Err(Error::Contract { message: "metrics need at least one sample".to_string() });
    }
    let mut per_class = Vec::with_capacity(cm.n_classes);
    for c in 0..cm.n_classes {
        let tp = cm.counts[c][c];
        let fp = cm.col_sum(c) - tp;
        let fn_ = cm.row_sum(c) - tp;
        let precision = if tp + fp > 0 { tp as f64 / (tp + fp) as f64 } else { 0.0 };
        let recall = if tp + fn_ > 0 { tp as f64 / (tp + fn_) as f64 } else { 0.0 };
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        per_class.push(ClassMetrics {
            precision,
            recall,
            f1,
            support: cm.row_sum(c),
            defined: cm.row_sum(c) + cm.col_sum(c) > 0,
        });
    }
    let (precision, recall, f1) = match averaging {
        Averaging::Macro => {
            let n = cm.n_classes as f64;
            (
                per_class.iter().map(|m| m.precision).sum::<f64>() / n,
                per_class.iter().map(|m| m.recall).sum::<f64>() / n,
                per_class.iter().map(|m| m.f1).sum::<f64>() / n,
            )
        }
        Averaging::Weighted => {
            let weight_sum = total as f64;
            let w = |f: fn(&ClassMetrics) -> f64| {
                per_class.iter().map(|m| f(m) * m.support as f64).sum::<f64>() / weight_sum
            };
            (w(|m| m.precision), w(|m| m.recall), w(|m| m.f1))
        }
    };
    Ok(MetricsReport {
        per_class,
        precision,
        recall,
        f1,
        accuracy: cm.trace() as f64 / total as f64 * 100.0,
        averaging,
        confusion: cm.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn perfect_predictions_form_a_diagonal() {
        let labels = [0usize, 1, 2, 3, 2, 1];
        let cm = ConfusionMatrix::from_labels(&labels, &labels, 4).unwrap();
        assert_eq!(cm.trace(), 6);
        assert_eq!(cm.total(), 6);
        let report = metrics(&cm, Averaging::Macro).unwrap();
        assert_eq!(report.accuracy, 100.0);
        assert_eq!(report.f1, 1.0);
    }

    #[test]
    fn hand_counted_example() {
        let cm = ConfusionMatrix::from_labels(&[0, 0, 3], &[0, 3, 3], 4).unwrap();
        assert_eq!(cm.counts[0][0], 1);
        assert_eq!(cm.counts[0][3], 1);
        assert_eq!(cm.counts[3][3], 1);
        assert_eq!(cm.total(), 3);
    }

    #[test]
    fn out_of_range_label_is_an_index_error() {
        assert!(matches!(
            ConfusionMatrix::from_labels(&[4], &[0], 4),
            Err(Error::Index { .. })
        ));
        assert!(matches!(
            ConfusionMatrix::from_labels(&[0], &[7], 4),
            Err(Error::Index { .. })
        ));
    }

    #[test]
    fn precision_from_tp_and_fp() {
        // class 0: tp=3, fp=1 -> precision 0.75
        let cm = ConfusionMatrix {
            n_classes: 2,
            counts: vec![vec![3, 0], vec![1, 5]],
        };
        let report = metrics(&cm, Averaging::Macro).unwrap();
        assert!((report.per_class[0].precision - 0.75).abs() < 1e-15);
    }

    #[test]
    fn f1_is_a_fixed_point_when_precision_equals_recall() {
        // single class view: pr = re = 0.9 -> f1 = 0.9
        let pr: f64 = 0.9;
        let re: f64 = 0.9;
        let f1 = 2.0 * pr * re / (pr + re);
        assert!((f1 - 0.9).abs() < 1e-15);
    }

    #[test]
    fn paper_style_diagonal_gives_expected_accuracy() {
        // row-normalized diagonal (97, 97, 98, 94)% with equal supports of 100
        let mut counts = vec![vec![0u64; 4]; 4];
        let diag = [97u64, 97, 98, 94];
        for (i, &d) in diag.iter().enumerate() {
            counts[i][i] = d;
            counts[i][(i + 1) % 4] = 100 - d;
        }
        let cm = ConfusionMatrix { n_classes: 4, counts };
        let report = metrics(&cm, Averaging::Macro).unwrap();
        assert!((report.accuracy - 96.5).abs() < 1e-12);
    }

    #[test]
    fn random_labels_match_brute_force_recount() {
        let mut rng = ChaCha8Rng::seed_from_u64(123);
        for _ in 0..50 {
            let n = rng.gen_range(1..400);
            let t: Vec<usize> = (0..n).map(|_| rng.gen_range(0..4)).collect();
            let p: Vec<usize> = (0..n).map(|_| rng.gen_range(0..4)).collect();
            let cm = ConfusionMatrix::from_labels(&t, &p, 4).unwrap();
            assert_eq!(cm.total() as usize, n);
            // row sums match the true-label histogram
            for c in 0..4 {
                let count = t.iter().filter(|&&l| l == c).count() as u64;
                assert_eq!(cm.row_sum(c), count);
            }
            let report = metrics(&cm, Averaging::Macro).unwrap();
            for c in 0..4 {
                let tp = t.iter().zip(&p).filter(|(&a, &b)| a == c && b == c).count() as f64;
                let fp = t.iter().zip(&p).filter(|(&a, &b)| a != c && b == c).count() as f64;
                let fn_ = t.iter().zip(&p).filter(|(&a, &b)| a == c && b != c).count() as f64;
                let pr = if tp + fp > 0.0 { tp / (tp + fp) } else { 0.0 };
                let re = if tp + fn_ > 0.0 { tp / (tp + fn_) } else { 0.0 };
                assert!((report.per_class[c].precision - pr).abs() < 1e-12);
                assert!((report.per_class[c].recall - re).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn macro_metrics_are_invariant_under_relabeling() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let t: Vec<usize> = (0..300).map(|_| rng.gen_range(0..4)).collect();
        let p: Vec<usize> = (0..300).map(|_| rng.gen_range(0..4)).collect();
        let perm = [2usize, 0, 3, 1];
        let tp: Vec<usize> = t.iter().map(|&l| perm[l]).collect();
        let pp: Vec<usize> = p.iter().map(|&l| perm[l]).collect();
        let a = metrics(&ConfusionMatrix::from_labels(&t, &p, 4).unwrap(), Averaging::Macro).unwrap();
        let b = metrics(&ConfusionMatrix::from_labels(&tp, &pp, 4).unwrap(), Averaging::Macro).unwrap();
        assert!((a.precision - b.precision).abs() < 1e-12);
        assert!((a.recall - b.recall).abs() < 1e-12);
        assert!((a.f1 - b.f1).abs() < 1e-12);
        assert!((a.accuracy - b.accuracy).abs() < 1e-12);
    }

    #[test]
    fn averaged_matrix_is_the_elementwise_mean() {
        let a = ConfusionMatrix { n_classes: 2, counts: vec![vec![4, 0], vec![2, 2]] };
        let b = ConfusionMatrix { n_classes: 2, counts: vec![vec![2, 2], vec![0, 4]] };
        let mean = ConfusionMatrix::mean_of(&[&a, &b]);
        assert_eq!(mean, vec![vec![3.0, 1.0], vec![1.0, 3.0]]);
    }
}
