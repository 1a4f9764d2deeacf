//! Serializable run reports, delimited-text views, and the confusion-matrix
//! heat map rendering.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::crossval::{AggregateMetrics, CrossValConfig, FoldResult};
use crate::data::class_name;
use crate::model::ModelConfig;
use crate::train::{EpochStats, TrainConfig};

/// Key-value tree written once per run; wall-clock times live only in the
/// per-fold history files so this stays byte-stable across reruns.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunReport {
    pub command: String,
    pub seed: u64,
    pub variant: Option<String>,
    pub model_config: ModelConfig,
    pub config_hash: String,
    pub train_config: TrainConfig,
    pub cv: Option<CrossValConfig>,
    pub folds: Vec<FoldSummary>,
    pub aggregate: Option<AggregateMetrics>,
    pub averaged_confusion: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FoldSummary {
    pub fold_index: usize,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub n_train_real: usize,
    pub n_train_synthetic: usize,
    pub n_val: usize,
    pub epochs_run: usize,
    pub confusion: Vec<Vec<u64>>,
}

impl FoldSummary {
    pub fn of<S>(fold: &FoldResult<S>) -> Self {
        FoldSummary {
            fold_index: fold.fold_index,
            accuracy: fold.metrics.accuracy,
            precision: fold.metrics.precision,
            recall: fold.metrics.recall,
            f1: fold.metrics.f1,
            n_train_real: fold.n_train_real,
            n_train_synthetic: fold.n_train_synthetic,
            n_val: fold.n_val,
            epochs_run: fold.history.len(),
            confusion: fold.metrics.confusion.counts.clone(),
        }
    }
}

impl RunReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(text: &str) -> crate::error::Result<Self> {
        serde_json::from_str(text)
            .map_err(|e| crate::error::Error::format(None, format!("bad report json: {e}")))
    }
}

/// Per-fold metrics plus mean/std rows, comma-delimited.
pub fn metrics_csv(folds: &[FoldSummary], aggregate: Option<&AggregateMetrics>) -> String {
    let mut out = String::from("fold,accuracy,precision,recall,f1,n_train_real,n_train_synthetic,n_val\n");
    for f in folds {
        writeln!(
            out,
            "{},{:?},{:?},{:?},{:?},{},{},{}",
            f.fold_index, f.accuracy, f.precision, f.recall, f.f1, f.n_train_real, f.n_train_synthetic, f.n_val
        )
        .unwrap();
    }
    if let Some(a) = aggregate {
        writeln!(out, "mean,{:?},{:?},{:?},{:?},,,", a.accuracy_mean, a.precision_mean, a.recall_mean, a.f1_mean)
            .unwrap();
        writeln!(out, "std,{:?},{:?},{:?},{:?},,,", a.accuracy_std, a.precision_std, a.recall_std, a.f1_std)
            .unwrap();
    }
    out
}

/// One row per epoch: epoch, losses, accuracies, wall time.
pub fn history_csv(history: &[EpochStats]) -> String {
    let mut out = String::from("epoch,train_loss,train_acc,val_loss,val_acc,wall_ms\n");
    for h in history {
        writeln!(
            out,
            "{},{:?},{:?},{:?},{:?},{}",
            h.epoch, h.train_loss, h.train_acc, h.val_loss, h.val_acc, h.wall_ms
        )
        .unwrap();
    }
    out
}

fn heat_color(v: f64) -> String {
    // white -> steel blue
    let v = v.clamp(0.0, 1.0);
    let r = (255.0 - v * (255.0 - 70.0)) as u8;
    let g = (255.0 - v * (255.0 - 130.0)) as u8;
    let b = (255.0 - v * (255.0 - 180.0)) as u8;
    format!("#{r:02x}{g:02x}{b:02x}")
}

/// Render a (typically fold-averaged) confusion matrix as a static SVG heat
/// map; cells show row-normalized fractions.
pub fn confusion_svg(matrix: &[Vec<f64>], title: &str) -> String {
    let n = matrix.len();
    let cell = 74usize;
    let margin_left = 120usize;
    let margin_top = 70usize;
    let margin_bottom = 40usize;
    let width = margin_left + n * cell + 20;
    let height = margin_top + n * cell + margin_bottom;
    let row_totals: Vec<f64> = matrix.iter().map(|r| r.iter().sum::<f64>().max(1e-12)).collect();
    let mut svg = String::new();
    write!(
        svg,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width}\" height=\"{height}\" \
         font-family=\"Helvetica, Arial, sans-serif\">\n"
    )
    .unwrap();
    writeln!(svg, "<rect width=\"{width}\" height=\"{height}\" fill=\"white\"/>").unwrap();
    writeln!(
        svg,
        "<text x=\"{}\" y=\"28\" font-size=\"16\" text-anchor=\"middle\">{title}</text>",
        margin_left + n * cell / 2
    )
    .unwrap();
    writeln!(
        svg,
        "<text x=\"{}\" y=\"50\" font-size=\"12\" text-anchor=\"middle\" fill=\"#555\">predicted class</text>",
        margin_left + n * cell / 2
    )
    .unwrap();
    for (i, row) in matrix.iter().enumerate() {
        let y = margin_top + i * cell;
        writeln!(
            svg,
            "<text x=\"{}\" y=\"{}\" font-size=\"12\" text-anchor=\"end\">{}</text>",
            margin_left - 8,
            y + cell / 2 + 4,
            class_name(i)
        )
        .unwrap();
        for (j, &raw) in row.iter().enumerate() {
            let frac = raw / row_totals[i];
            let x = margin_left + j * cell;
            writeln!(
                svg,
                "<rect x=\"{x}\" y=\"{y}\" width=\"{cell}\" height=\"{cell}\" fill=\"{}\" stroke=\"#999\"/>",
                heat_color(frac)
            )
            .unwrap();
            let text_fill = if frac > 0.55 { "white" } else { "#222" };
            writeln!(
                svg,
                "<text x=\"{}\" y=\"{}\" font-size=\"13\" text-anchor=\"middle\" fill=\"{text_fill}\">{:.2}</text>",
                x + cell / 2,
                y + cell / 2 + 5,
                frac
            )
            .unwrap();
        }
    }
    for j in 0..n {
        writeln!(
            svg,
            "<text x=\"{}\" y=\"{}\" font-size=\"12\" text-anchor=\"middle\">{}</text>",
            margin_left + j * cell + cell / 2,
            margin_top + n * cell + 24,
            class_name(j)
        )
        .unwrap();
    }
    svg.push_str("</svg>\n");
    svg
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trips_floats_exactly() {
        let folds = vec![FoldSummary {
            fold_index: 0,
            accuracy: 96.66666666666667,
            precision: 0.1 + 0.2,
            recall: 0.9,
            f1: 0.925,
            n_train_real: 80,
            n_train_synthetic: 20,
            n_val: 10,
            epochs_run: 7,
            confusion: vec![vec![1, 0], vec![0, 9]],
        }];
        let csv = metrics_csv(&folds, None);
        let row = csv.lines().nth(1).unwrap();
        let acc: f64 = row.split(',').nth(1).unwrap().parse().unwrap();
        assert_eq!(acc.to_bits(), 96.66666666666667f64.to_bits());
        let pr: f64 = row.split(',').nth(2).unwrap().parse().unwrap();
        assert_eq!(pr.to_bits(), (0.1f64 + 0.2).to_bits());
    }

    #[test]
    fn svg_contains_a_cell_per_class_pair() {
        let m = vec![vec![9.0, 1.0], vec![2.0, 8.0]];
        let svg = confusion_svg(&m, "test");
        assert_eq!(svg.matches("<rect").count(), 1 + 4); // background + cells
        assert!(svg.contains("0.90"));
        assert!(svg.contains("0.80"));
        assert!(svg.starts_with("<svg"));
        assert!(svg.trim_end().ends_with("</svg>"));
    }

    #[test]
    fn identical_reports_serialize_identically() {
        let m = vec![vec![5.0, 0.0], vec![1.0, 4.0]];
        assert_eq!(confusion_svg(&m, "t"), confusion_svg(&m, "t"));
    }
}
