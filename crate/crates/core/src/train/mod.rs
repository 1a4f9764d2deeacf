//! Nadam training loop with dropout, early stopping on validation loss,
//! and exact-resume checkpointing.

mod nadam;
mod state;

pub use nadam::{clip_global_norm, NadamState};
pub use state::TrainState;

use std::collections::BTreeMap;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{segments_to_batch, Segment};
use crate::derive_seed;
use crate::error::{Error, Result};
use crate::model::InceptoFormer;
use crate::nn::{Mode, Params};
use crate::scalar::Scalar;
use crate::tensor::Tape;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub learning_rate: f64,
    pub max_epochs: usize,
    pub early_stop_patience: usize,
    pub early_stop_min_delta: f64,
    pub dropout: f64,
    pub seed: u64,
    /// Global-norm gradient clipping threshold; off by default.
    pub clip_norm: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 64,
            learning_rate: 1e-4,
            max_epochs: 500,
            early_stop_patience: 10,
            early_stop_min_delta: 1e-4,
            dropout: 0.2,
            seed: 0,
            clip_norm: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::config("batch_size", "must be at least 1"));
        }
        if self.early_stop_patience == 0 {
            return Err(Error::config("early_stop_patience", "must be at least 1"));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::config("dropout", format!("must be in [0,1), got {}", self.dropout)));
        }
        if !self.learning_rate.is_finite() || self.learning_rate <= 0.0 {
            return Err(Error::config("learning_rate", "must be positive"));
        }
        Ok(())
    }
}

/// One row of the training history.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_acc: f64,
    pub val_loss: f64,
    pub val_acc: f64,
    pub wall_ms: u64,
}

pub struct TrainOutcome<S> {
    /// Weights of the best validation-loss epoch.
    pub best_params: Params<S>,
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub history: Vec<EpochStats>,
    pub stopped_early: bool,
}

/// Loss, accuracy and predictions of a model over a segment set (eval mode).
pub struct EvalStats {
    pub loss: f64,
    pub accuracy: f64,
    pub predictions: Vec<usize>,
    pub labels: Vec<usize>,
}

/// Evaluate in eval mode, batching to bound memory.
pub fn evaluate<S: Scalar>(
    model: &mut InceptoFormer<S>,
    segments: &[&Segment],
    batch_size: usize,
) -> Result<EvalStats> {
    if segments.is_empty() {
        return Err(Error::config("segments", "cannot evaluate an empty set"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut predictions = Vec::with_capacity(segments.len());
    let mut labels = Vec::with_capacity(segments.len());
    let mut loss_sum = 0.0f64;
    for chunk in segments.chunks(batch_size.max(1)) {
        let batch: Vec<S> =
            segments_to_batch(chunk).into_iter().map(S::from_f64_c).collect();
        let chunk_labels: Vec<usize> = chunk.iter().map(|s| s.label).collect();
        let tape = Tape::new();
        let x = tape.constant(
            batch,
            &[chunk.len(), model.config().n_signals, model.config().segment_len],
        )?;
        let out = model.forward(&tape, &x, Mode::Eval, &mut rng)?;
        let loss = out.logits.cross_entropy(&chunk_labels)?.item().to_f64_c();
        loss_sum += loss * chunk.len() as f64;
        let probs = out.logits.softmax()?.data();
        for row in probs.chunks(model.config().n_classes) {
            let mut best = 0;
            for (i, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = i;
                }
            }
            predictions.push(best);
        }
        labels.extend(chunk_labels);
    }
    let correct = predictions.iter().zip(&labels).filter(|(p, l)| p == l).count();
    Ok(EvalStats {
        loss: loss_sum / segments.len() as f64,
        accuracy: correct as f64 / segments.len() as f64,
        predictions,
        labels,
    })
}

/// Train with the default evaluator (validation loss/accuracy in eval mode).
pub fn train<S: Scalar>(
    model: &mut InceptoFormer<S>,
    train_segments: &[&Segment],
    val_segments: &[&Segment],
    config: &TrainConfig,
) -> Result<TrainOutcome<S>> {
    let batch_size = config.batch_size;
    train_with_evaluator(model, train_segments, config, |m, _| {
        let stats = evaluate(m, val_segments, batch_size)?;
        Ok((stats.loss, stats.accuracy))
    })
}

/// Training loop with a pluggable validation evaluator (tests script it).
///
/// Epoch RNG streams derive from `(seed, epoch)`, so resuming at an epoch
/// boundary replays the identical shuffle and dropout sequence.
pub fn train_with_evaluator<S, F>(
    model: &mut InceptoFormer<S>,
    train_segments: &[&Segment],
    config: &TrainConfig,
    mut validate: F,
) -> Result<TrainOutcome<S>>
where
    S: Scalar,
    F: FnMut(&mut InceptoFormer<S>, usize) -> Result<(f64, f64)>,
{
    config.validate()?;
    if train_segments.is_empty() {
        return Err(Error::config("train_segments", "training set is empty"));
    }
    model.set_dropout(config.dropout)?;
    let mut state = TrainState::fresh(model, config);
    run_epochs(model, train_segments, config, &mut state, &mut validate)?;
    Ok(state.into_outcome())
}

/// Continue a checkpointed run until `config.max_epochs`.
pub fn resume_with_evaluator<S, F>(
    model: &mut InceptoFormer<S>,
    train_segments: &[&Segment],
    config: &TrainConfig,
    state: &mut TrainState<S>,
    mut validate: F,
) -> Result<()>
where
    S: Scalar,
    F: FnMut(&mut InceptoFormer<S>, usize) -> Result<(f64, f64)>,
{
    config.validate()?;
    if train_segments.is_empty() {
        return Err(Error::config("train_segments", "training set is empty"));
    }
    model.set_dropout(config.dropout)?;
    run_epochs(model, train_segments, config, state, &mut validate)
}

fn run_epochs<S, F>(
    model: &mut InceptoFormer<S>,
    train_segments: &[&Segment],
    config: &TrainConfig,
    state: &mut TrainState<S>,
    validate: &mut F,
) -> Result<()>
where
    S: Scalar,
    F: FnMut(&mut InceptoFormer<S>, usize) -> Result<(f64, f64)>,
{
    let n = train_segments.len();
    let (n_signals, segment_len) = (model.config().n_signals, model.config().segment_len);
    while state.epoch < config.max_epochs && !state.stopped_early {
        let epoch = state.epoch;
        let started = Instant::now();
        let mut order: Vec<usize> = (0..n).collect();
        let mut epoch_rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, epoch as u64 + 1));
        order.shuffle(&mut epoch_rng);

        // batch boundaries; a trailing singleton merges into the previous
        // batch so batch statistics stay defined
        let mut batches: Vec<&[usize]> = order.chunks(config.batch_size).collect();
        if batches.len() >= 2 && batches.last().map_or(false, |b| b.len() == 1) {
            let last_start = (batches.len() - 2) * config.batch_size;
            batches.pop();
            batches.pop();
            batches.push(&order[last_start..]);
        }

        let mut loss_sum = 0.0f64;
        let mut correct = 0usize;
        for (batch_index, ids) in batches.iter().enumerate() {
            let chunk: Vec<&Segment> = ids.iter().map(|&i| train_segments[i]).collect();
            let labels: Vec<usize> = chunk.iter().map(|s| s.label).collect();
            let batch: Vec<S> =
                segments_to_batch(&chunk).into_iter().map(S::from_f64_c).collect();
            let tape = Tape::new();
            let x = tape.constant(batch, &[chunk.len(), n_signals, segment_len])?;
            let out = model.forward(&tape, &x, Mode::Train, &mut epoch_rng)?;
            let loss = out.logits.cross_entropy(&labels)?;
            let loss_val = loss.item().to_f64_c();
            if !loss_val.is_finite() {
                return Err(Error::Numerical {
                    message: format!("non-finite loss at epoch {epoch}, batch {batch_index}"),
                });
            }
            loss_sum += loss_val * chunk.len() as f64;
            // train accuracy reads the train-mode forward outputs directly
            let logits = out.logits.data();
            let c = logits.len() / labels.len();
            for (row, &label) in logits.chunks(c).zip(&labels) {
                let mut best = 0;
                for (i, &v) in row.iter().enumerate() {
                    if v > row[best] {
                        best = i;
                    }
                }
                if best == label {
                    correct += 1;
                }
            }
            loss.backward()?;
            let mut grads: BTreeMap<_, _> = out
                .bindings
                .iter()
                .map(|(pid, tensor)| (*pid, tensor.grad_or_zeros()))
                .collect();
            if let Some(max_norm) = config.clip_norm {
                clip_global_norm(&mut grads, max_norm);
            }
            state.optimizer.apply(model.params_mut(), &grads)?;
        }
        let train_loss = loss_sum / n as f64;
        let train_acc = correct as f64 / n as f64;
        let (val_loss, val_acc) = validate(model, epoch)?;
        let wall_ms = started.elapsed().as_millis() as u64;
        state.epoch += 1;
        state.history.push(EpochStats {
            epoch: state.epoch,
            train_loss,
            train_acc,
            val_loss,
            val_acc,
            wall_ms,
        });
        if state.best_val_loss - val_loss > config.early_stop_min_delta {
            state.best_val_loss = val_loss;
            state.best_epoch = state.epoch;
            state.best_params = model.params().clone();
            state.stall = 0;
        } else {
            state.stall += 1;
            if state.stall >= config.early_stop_patience {
                state.stopped_early = true;
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{synth_dataset, SynthSpec};
    use crate::model::ModelConfig;

    fn tiny_model(seed: u64) -> InceptoFormer<f64> {
        let config = ModelConfig {
            n_signals: 18,
            segment_len: 100,
            filters_per_stream: 2,
            reduced_dim: 4,
            classifier_widths: vec![16, 8],
            ..ModelConfig::default()
        };
        InceptoFormer::new(&config, seed).unwrap()
    }

    fn small_dataset() -> Vec<crate::data::Segment> {
        let spec = SynthSpec {
            n_subjects_per_class: 1,
            n_timesteps: 150,
            noise_std: 0.0,
            seed: 3,
        };
        let records = synth_dataset(&spec).unwrap();
        records
            .iter()
            .flat_map(|r| crate::data::segment(r, 100, 0.5).unwrap())
            .collect()
    }

    #[test]
    fn zero_epochs_returns_initial_weights_and_empty_history() {
        let mut model = tiny_model(1);
        let before = model.checkpoint_string();
        let segs = small_dataset();
        let refs: Vec<&_> = segs.iter().collect();
        let config = TrainConfig { max_epochs: 0, ..Default::default() };
        let outcome = train(&mut model, &refs, &refs, &config).unwrap();
        assert!(outcome.history.is_empty());
        assert_eq!(model.checkpoint_string(), before);
    }

    #[test]
    fn empty_training_set_is_a_config_error() {
        let mut model = tiny_model(1);
        let segs = small_dataset();
        let refs: Vec<&_> = segs.iter().collect();
        let config = TrainConfig::default();
        assert!(train(&mut model, &[], &refs, &config).is_err());
    }

    #[test]
    fn scripted_patience_stops_at_the_right_epoch() {
        // losses improve through epoch 3, then plateau; patience 1 stops at
        // epoch 4 and the checkpoint is epoch 3's weights
        let mut model = tiny_model(2);
        let segs = small_dataset();
        let refs: Vec<&_> = segs.iter().collect();
        let config = TrainConfig {
            max_epochs: 50,
            early_stop_patience: 1,
            batch_size: 8,
            ..Default::default()
        };
        let schedule = [1.0, 0.8, 0.5, 0.5001];
        let outcome = train_with_evaluator(&mut model, &refs, &config, |_, epoch| {
            Ok((schedule[epoch.min(schedule.len() - 1)], 0.0))
        })
        .unwrap();
        assert!(outcome.stopped_early);
        assert_eq!(outcome.history.len(), 4);
        assert_eq!(outcome.best_epoch, 3);
        assert!((outcome.best_val_loss - 0.5).abs() < 1e-12);
    }

    #[test]
    fn best_checkpoint_has_the_minimum_recorded_val_loss() {
        let mut model = tiny_model(3);
        let segs = small_dataset();
        let refs: Vec<&_> = segs.iter().collect();
        let config = TrainConfig {
            max_epochs: 6,
            early_stop_patience: 10,
            batch_size: 8,
            ..Default::default()
        };
        let schedule = [0.9, 0.7, 0.8, 0.6, 0.75, 0.65];
        let outcome = train_with_evaluator(&mut model, &refs, &config, |_, epoch| {
            Ok((schedule[epoch], 0.0))
        })
        .unwrap();
        let min = outcome.history.iter().map(|h| h.val_loss).fold(f64::MAX, f64::min);
        assert!((outcome.best_val_loss - min).abs() < 1e-12);
        assert_eq!(outcome.best_epoch, 4);
    }

    #[test]
    fn training_is_bit_reproducible_under_a_seed() {
        let segs = small_dataset();
        let refs: Vec<&_> = segs.iter().collect();
        let config = TrainConfig { max_epochs: 2, batch_size: 8, seed: 77, ..Default::default() };
        let run = |seed| {
            let mut model = tiny_model(seed);
            let mut out = train(&mut model, &refs, &refs, &config).unwrap();
            // wall-clock time is the one non-deterministic field by design
            out.history.iter_mut().for_each(|h| h.wall_ms = 0);
            (model.checkpoint_string(), out.history)
        };
        let (w1, h1) = run(5);
        let (w2, h2) = run(5);
        assert_eq!(w1, w2);
        assert_eq!(serde_json::to_string(&h1).unwrap(), serde_json::to_string(&h2).unwrap());
    }

    #[test]
    fn a_few_epochs_reduce_training_loss() {
        let mut model = tiny_model(6);
        let segs = small_dataset();
        let refs: Vec<&_> = segs.iter().collect();
        let config = TrainConfig {
            max_epochs: 5,
            batch_size: 8,
            learning_rate: 1e-3,
            early_stop_patience: 50,
            ..Default::default()
        };
        let outcome = train(&mut model, &refs, &refs, &config).unwrap();
        let first = outcome.history.first().unwrap().train_loss;
        let last = outcome.history.last().unwrap().train_loss;
        assert!(last < first, "loss {first} -> {last}");
    }
}
