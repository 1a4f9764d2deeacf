//! k-fold cross-validation and the component ablation harness.
//!
//! Each fold trains a fresh model on its training side (oversampled there,
//! and only there, unless the pool was balanced globally upstream) and
//! evaluates the best checkpoint on the untouched validation side. Folds
//! are independent units keyed by seeds derived from the master seed, so
//! they may run in parallel without affecting results.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{metrics, Averaging, ConfusionMatrix, MetricsReport};
use crate::data::{stratified_folds, CvUnit, OversamplePlan, Segment};
use crate::derive_seed;
use crate::error::{Error, Result};
use crate::model::{ablation_variant, AblationVariant, InceptoFormer, ModelConfig};
use crate::nn::Params;
use crate::scalar::Scalar;
use crate::train::{evaluate, train, EpochStats, TrainConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SmoteMode {
    /// Oversample each fold's training side after splitting (leakage-safe).
    PerFold,
    /// The pool was already oversampled before splitting; don't re-apply.
    Global,
    /// No oversampling anywhere.
    Off,
}

impl std::str::FromStr for SmoteMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "per-fold" | "perfold" => Ok(SmoteMode::PerFold),
            "global" => Ok(SmoteMode::Global),
            "off" | "none" => Ok(SmoteMode::Off),
            other => Err(Error::config("smote", format!("expected per-fold|global|off, got {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CrossValConfig {
    pub k: usize,
    pub unit: CvUnit,
    pub seed: u64,
    pub smote: SmoteMode,
    pub k_neighbors: usize,
    pub averaging: Averaging,
    /// Train folds concurrently (results are identical either way).
    pub parallel: bool,
}

impl Default for CrossValConfig {
    fn default() -> Self {
        CrossValConfig {
            k: 10,
            unit: CvUnit::Segment,
            seed: 0,
            smote: SmoteMode::PerFold,
            k_neighbors: 5,
            averaging: Averaging::Macro,
            parallel: true,
        }
    }
}

pub struct FoldResult<S> {
    pub fold_index: usize,
    pub metrics: MetricsReport,
    pub history: Vec<EpochStats>,
    pub best_params: Params<S>,
    pub n_train_real: usize,
    pub n_train_synthetic: usize,
    pub n_val: usize,
}

/// Mean and sample standard deviation of the headline metrics across folds.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AggregateMetrics {
    pub accuracy_mean: f64,
    pub accuracy_std: f64,
    pub precision_mean: f64,
    pub precision_std: f64,
    pub recall_mean: f64,
    pub recall_std: f64,
    pub f1_mean: f64,
    pub f1_std: f64,
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

pub struct CrossValOutcome<S> {
    pub folds: Vec<FoldResult<S>>,
    pub aggregate: AggregateMetrics,
    pub averaged_confusion: Vec<Vec<f64>>,
    pub config: CrossValConfig,
}

impl<S> CrossValOutcome<S> {
    fn assemble(folds: Vec<FoldResult<S>>, config: CrossValConfig) -> Self {
        let acc: Vec<f64> = folds.iter().map(|f| f.metrics.accuracy).collect();
        let pr: Vec<f64> = folds.iter().map(|f| f.metrics.precision).collect();
        let re: Vec<f64> = folds.iter().map(|f| f.metrics.recall).collect();
        let f1: Vec<f64> = folds.iter().map(|f| f.metrics.f1).collect();
        let (accuracy_mean, accuracy_std) = mean_std(&acc);
        let (precision_mean, precision_std) = mean_std(&pr);
        let (recall_mean, recall_std) = mean_std(&re);
        let (f1_mean, f1_std) = mean_std(&f1);
        let cms: Vec<&ConfusionMatrix> = folds.iter().map(|f| &f.metrics.confusion).collect();
        let averaged_confusion = ConfusionMatrix::mean_of(&cms);
        CrossValOutcome {
            folds,
            aggregate: AggregateMetrics {
                accuracy_mean,
                accuracy_std,
                precision_mean,
                precision_std,
                recall_mean,
                recall_std,
                f1_mean,
                f1_std,
            },
            averaged_confusion,
            config,
        }
    }
}

fn run_fold<S: Scalar>(
    segments: &[Segment],
    fold: &crate::data::FoldSplit,
    model_config: &ModelConfig,
    train_config: &TrainConfig,
    cv: &CrossValConfig,
) -> Result<FoldResult<S>> {
    let fold_seed = derive_seed(cv.seed, 1000 + fold.fold_index as u64);
    let mut train_pool: Vec<Segment> =
        fold.train_segment_ids.iter().map(|&i| segments[i].clone()).collect();
    let n_train_real = train_pool.iter().filter(|s| !s.is_synthetic()).count();
    if cv.smote == SmoteMode::PerFold {
        let plan = OversamplePlan::new(&train_pool, model_config.n_classes, cv.k_neighbors);
        if plan.total_new() > 0 {
            train_pool = crate::data::smote(&train_pool, &plan, derive_seed(fold_seed, 7))?;
        }
    }
    let n_train_synthetic = train_pool.iter().filter(|s| s.is_synthetic()).count();
    let val_pool: Vec<&Segment> = fold.val_segment_ids.iter().map(|&i| &segments[i]).collect();
    let train_refs: Vec<&Segment> = train_pool.iter().collect();

    let mut model: InceptoFormer<S> = InceptoFormer::new(model_config, fold_seed)?;
    let tc = TrainConfig { seed: fold_seed, ..train_config.clone() };
    let outcome = train(&mut model, &train_refs, &val_pool, &tc)?;
    model.params_mut().copy_from(&outcome.best_params)?;
    let stats = evaluate(&mut model, &val_pool, tc.batch_size)?;
    let cm = ConfusionMatrix::from_labels(&stats.labels, &stats.predictions, model_config.n_classes)?;
    Ok(FoldResult {
        fold_index: fold.fold_index,
        metrics: metrics(&cm, cv.averaging)?,
        history: outcome.history,
        best_params: outcome.best_params,
        n_train_real,
        n_train_synthetic,
        n_val: val_pool.len(),
    })
}

/// Stratified k-fold cross-validation over a segment pool.
pub fn cross_validate<S: Scalar>(
    segments: &[Segment],
    model_config: &ModelConfig,
    train_config: &TrainConfig,
    cv: &CrossValConfig,
) -> Result<CrossValOutcome<S>> {
    model_config.validate()?;
    train_config.validate()?;
    let folds = stratified_folds(segments, cv.k, cv.unit, cv.seed)?;
    let results: Result<Vec<FoldResult<S>>> = if cv.parallel {
        folds
            .par_iter()
            .map(|fold| run_fold(segments, fold, model_config, train_config, cv))
            .collect()
    } else {
        folds
            .iter()
            .map(|fold| run_fold(segments, fold, model_config, train_config, cv))
            .collect()
    };
    Ok(CrossValOutcome::assemble(results?, cv.clone()))
}

pub struct AblationOutcome<S> {
    pub variants: Vec<(AblationVariant, CrossValOutcome<S>)>,
}

impl<S> AblationOutcome<S> {
    /// Accuracy delta of each variant relative to the full model.
    pub fn deltas_vs_full(&self) -> Vec<(AblationVariant, f64)> {
        let full = self
            .variants
            .iter()
            .find(|(v, _)| *v == AblationVariant::Model3)
            .map(|(_, o)| o.aggregate.accuracy_mean)
            .unwrap_or(f64::NAN);
        self.variants
            .iter()
            .map(|(v, o)| (*v, o.aggregate.accuracy_mean - full))
            .collect()
    }
}

/// Run cross-validation for every Table-2 variant on identical fold splits.
pub fn ablate<S: Scalar>(
    segments: &[Segment],
    base_config: &ModelConfig,
    train_config: &TrainConfig,
    cv: &CrossValConfig,
) -> Result<AblationOutcome<S>> {
    let mut variants = Vec::new();
    for variant in AblationVariant::all() {
        let config = ablation_variant(base_config, variant);
        let outcome = cross_validate::<S>(segments, &config, train_config, cv)?;
        variants.push((variant, outcome));
    }
    Ok(AblationOutcome { variants })
}
