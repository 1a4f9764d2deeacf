//! Checkpointable training state for exact resume.
//!
//! A train-state file embeds the model config (with hash), the train config,
//! early-stopping bookkeeping, the current and best weights, and both Nadam
//! moment arrays. Because epoch RNG streams derive from `(seed, epoch)`,
//! reloading at an epoch boundary continues the run bit-exactly.

use std::fmt::Write as _;
use std::path::Path;

use super::nadam::NadamState;
use super::{EpochStats, TrainConfig, TrainOutcome};
use crate::error::{Error, Result};
use crate::model::checkpoint::{parse_tensor_line, tensor_line};
use crate::model::{InceptoFormer, ModelConfig};
use crate::nn::Params;
use crate::scalar::Scalar;

pub const MAGIC: &str = "inceptoformer-trainstate v1";

pub struct TrainState<S: Scalar> {
    pub epoch: usize,
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub stall: usize,
    pub stopped_early: bool,
    pub history: Vec<EpochStats>,
    pub best_params: Params<S>,
    pub optimizer: NadamState<S>,
}

impl<S: Scalar> TrainState<S> {
    pub fn fresh(model: &InceptoFormer<S>, config: &TrainConfig) -> Self {
        TrainState {
            epoch: 0,
            best_epoch: 0,
            best_val_loss: f64::INFINITY,
            stall: 0,
            stopped_early: false,
            history: Vec::new(),
            best_params: model.params().clone(),
            optimizer: NadamState::new(model.params(), config.learning_rate),
        }
    }

    pub fn into_outcome(self) -> TrainOutcome<S> {
        TrainOutcome {
            best_params: self.best_params,
            best_epoch: self.best_epoch,
            best_val_loss: self.best_val_loss,
            history: self.history,
            stopped_early: self.stopped_early,
        }
    }

    /// Serialize the full resumable state alongside the current model.
    pub fn save(&self, model: &InceptoFormer<S>, config: &TrainConfig, path: &Path) -> Result<()> {
        let mut out = String::new();
        out.push_str(MAGIC);
        out.push('\n');
        writeln!(out, "config-hash {}", model.config().hash()).unwrap();
        writeln!(out, "config {}", serde_json::to_string(model.config()).unwrap()).unwrap();
        writeln!(out, "train-config {}", serde_json::to_string(config).unwrap()).unwrap();
        writeln!(
            out,
            "scalars {} {} {} {} {} {:?}",
            self.epoch,
            self.best_epoch,
            self.stall,
            u8::from(self.stopped_early),
            self.optimizer.step,
            self.best_val_loss
        )
        .unwrap();
        writeln!(out, "history {}", serde_json::to_string(&self.history).unwrap()).unwrap();
        let params = model.params();
        for id in params.ids() {
            tensor_line(&mut out, "tensor", params.path(id), params.shape(id), params.data(id));
        }
        for id in self.best_params.ids() {
            tensor_line(
                &mut out,
                "best",
                self.best_params.path(id),
                self.best_params.shape(id),
                self.best_params.data(id),
            );
        }
        let (m, v) = self.optimizer.moments();
        for (slot, &id) in self.optimizer.ids().iter().enumerate() {
            tensor_line(&mut out, "optm", params.path(id), params.shape(id), &m[slot]);
            tensor_line(&mut out, "optv", params.path(id), params.shape(id), &v[slot]);
        }
        out.push_str("end\n");
        std::fs::write(path, out)?;
        Ok(())
    }

    /// Load a saved run: the model at its current weights, the train config,
    /// and the bookkeeping needed to continue.
    pub fn load(path: &Path) -> Result<(InceptoFormer<S>, TrainConfig, TrainState<S>)> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::format(path.to_str(), format!("cannot read train state: {e}")))?;
        let mut lines = text.lines();
        if lines.next() != Some(MAGIC) {
            return Err(Error::format(path.to_str(), format!("expected {MAGIC:?}")));
        }
        let hash = lines
            .next()
            .and_then(|l| l.strip_prefix("config-hash "))
            .ok_or_else(|| Error::format(path.to_str(), "missing config-hash"))?
            .to_string();
        let config: ModelConfig = lines
            .next()
            .and_then(|l| l.strip_prefix("config "))
            .ok_or_else(|| Error::format(path.to_str(), "missing config"))
            .and_then(|j| {
                serde_json::from_str(j).map_err(|e| Error::format(path.to_str(), format!("bad config: {e}")))
            })?;
        if config.hash() != hash {
            return Err(Error::format(path.to_str(), "config hash mismatch"));
        }
        let train_config: TrainConfig = lines
            .next()
            .and_then(|l| l.strip_prefix("train-config "))
            .ok_or_else(|| Error::format(path.to_str(), "missing train-config"))
            .and_then(|j| {
                serde_json::from_str(j).map_err(|e| Error::format(path.to_str(), format!("bad train-config: {e}")))
            })?;
        let scalars_line = lines
            .next()
            .and_then(|l| l.strip_prefix("scalars "))
            .ok_or_else(|| Error::format(path.to_str(), "missing scalars"))?;
        let toks: Vec<&str> = scalars_line.split_ascii_whitespace().collect();
        if toks.len() != 6 {
            return Err(Error::format(path.to_str(), "scalars line needs 6 fields"));
        }
        let parse_usize = |t: &str| {
            t.parse::<usize>().map_err(|_| Error::format(path.to_str(), format!("bad integer {t:?}")))
        };
        let epoch = parse_usize(toks[0])?;
        let best_epoch = parse_usize(toks[1])?;
        let stall = parse_usize(toks[2])?;
        let stopped_early = toks[3] == "1";
        let step = toks[4]
            .parse::<u64>()
            .map_err(|_| Error::format(path.to_str(), "bad step"))?;
        let best_val_loss = toks[5]
            .parse::<f64>()
            .map_err(|_| Error::format(path.to_str(), "bad best_val_loss"))?;
        let history: Vec<EpochStats> = lines
            .next()
            .and_then(|l| l.strip_prefix("history "))
            .ok_or_else(|| Error::format(path.to_str(), "missing history"))
            .and_then(|j| {
                serde_json::from_str(j).map_err(|e| Error::format(path.to_str(), format!("bad history: {e}")))
            })?;

        let mut model = InceptoFormer::new(&config, 0)?;
        let mut best_params = model.params().clone();
        let mut optimizer = NadamState::new(model.params(), train_config.learning_rate);
        let trainable = model.params().trainable_ids();
        let n_trainable = trainable.len();
        let mut m: Vec<Vec<S>> = vec![Vec::new(); n_trainable];
        let mut v: Vec<Vec<S>> = vec![Vec::new(); n_trainable];
        for line in lines {
            if line == "end" {
                break;
            }
            let (tag, body) = line
                .split_once(' ')
                .ok_or_else(|| Error::format(path.to_str(), format!("bad line {line:?}")))?;
            let (tensor_path, shape, values) = parse_tensor_line(body)?;
            let to_s = |values: Vec<f64>| values.into_iter().map(S::from_f64_c).collect::<Vec<S>>();
            match tag {
                "tensor" | "best" => {
                    let store: &mut Params<S> =
                        if tag == "tensor" { model.params_mut() } else { &mut best_params };
                    let id = store
                        .lookup(&tensor_path)
                        .ok_or_else(|| Error::format(path.to_str(), format!("unknown tensor {tensor_path:?}")))?;
                    if store.shape(id) != shape {
                        return Err(Error::format(path.to_str(), format!("shape mismatch at {tensor_path}")));
                    }
                    store.data_mut(id).copy_from_slice(&to_s(values));
                }
                "optm" | "optv" => {
                    let id = model
                        .params()
                        .lookup(&tensor_path)
                        .ok_or_else(|| Error::format(path.to_str(), format!("unknown tensor {tensor_path:?}")))?;
                    let slot = trainable
                        .iter()
                        .position(|&t| t == id)
                        .ok_or_else(|| Error::format(path.to_str(), format!("{tensor_path} is not trainable")))?;
                    if tag == "optm" {
                        m[slot] = to_s(values);
                    } else {
                        v[slot] = to_s(values);
                    }
                }
                other => return Err(Error::format(path.to_str(), format!("unknown tag {other:?}"))),
            }
        }
        if m.iter().any(Vec::is_empty) || v.iter().any(Vec::is_empty) {
            return Err(Error::format(path.to_str(), "missing optimizer moments"));
        }
        optimizer.restore_moments(m, v, step);
        let state = TrainState {
            epoch,
            best_epoch,
            best_val_loss,
            stall,
            stopped_early,
            history,
            best_params,
            optimizer,
        };
        Ok((model, train_config, state))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{segment, synth_dataset, SynthSpec};
    use crate::train::{resume_with_evaluator, train_with_evaluator};

    fn setup() -> (InceptoFormer<f64>, Vec<crate::data::Segment>, TrainConfig) {
        let config = ModelConfig {
            n_signals: 18,
            segment_len: 100,
            filters_per_stream: 2,
            reduced_dim: 4,
            classifier_widths: vec![8, 4],
            ..ModelConfig::default()
        };
        let model = InceptoFormer::new(&config, 21).unwrap();
        let spec = SynthSpec { n_subjects_per_class: 1, n_timesteps: 150, noise_std: 0.0, seed: 5 };
        let segs: Vec<_> = synth_dataset(&spec)
            .unwrap()
            .iter()
            .flat_map(|r| segment(r, 100, 0.5).unwrap())
            .collect();
        let tc = TrainConfig {
            max_epochs: 4,
            batch_size: 8,
            seed: 13,
            early_stop_patience: 50,
            ..Default::default()
        };
        (model, segs, tc)
    }

    #[test]
    fn save_load_resume_matches_uninterrupted_run() {
        let losses = [0.9, 0.8, 0.7, 0.6];
        let (mut straight, segs, tc) = setup();
        let refs: Vec<&_> = segs.iter().collect();
        let outcome =
            train_with_evaluator(&mut straight, &refs, &tc, |_, e| Ok((losses[e], 0.5))).unwrap();

        // interrupted run: 2 epochs, save, load, 2 more
        let (mut half, _, _) = setup();
        let tc_half = TrainConfig { max_epochs: 2, ..tc.clone() };
        let mut state = TrainState::fresh(&half, &tc_half);
        resume_with_evaluator(&mut half, &refs, &tc_half, &mut state, |_, e| Ok((losses[e], 0.5)))
            .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.trainstate");
        state.save(&half, &tc_half, &path).unwrap();

        let (mut reloaded, loaded_tc, mut loaded_state) = TrainState::<f64>::load(&path).unwrap();
        assert_eq!(loaded_tc.seed, tc.seed);
        let tc_full = TrainConfig { max_epochs: 4, ..loaded_tc };
        resume_with_evaluator(&mut reloaded, &refs, &tc_full, &mut loaded_state, |_, e| {
            Ok((losses[e], 0.5))
        })
        .unwrap();

        assert_eq!(straight.checkpoint_string(), reloaded.checkpoint_string());
        assert_eq!(loaded_state.history.len(), outcome.history.len());
        for (a, b) in loaded_state.history.iter().zip(&outcome.history) {
            assert_eq!(a.train_loss.to_bits(), b.train_loss.to_bits(), "epoch {} loss {} vs {}", a.epoch, a.train_loss, b.train_loss);
        }
    }
}
