//! Self-describing model checkpoints.
//!
//! Plain-text format, one tensor per line with shape and row-major values.
//! Values are printed with Rust's shortest round-trip float formatting, so
//! save -> load -> forward reproduces bit-identical outputs. The embedded
//! config hash guards against loading weights into a mismatched topology.

use std::fmt::Write as _;
use std::path::Path;

use super::{InceptoFormer, ModelConfig};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const MAGIC: &str = "inceptoformer-checkpoint v1";

/// Render one named tensor as a single text line.
pub(crate) fn tensor_line<S: Scalar>(out: &mut String, tag: &str, path: &str, shape: &[usize], data: &[S]) {
    let dims: Vec<String> = shape.iter().map(|d| d.to_string()).collect();
    write!(out, "{tag} {path} {}", dims.join("x")).unwrap();
    for v in data {
        write!(out, " {:?}", v.to_f64_c()).unwrap();
    }
    out.push('\n');
}

/// Parse a line produced by [`tensor_line`]; returns (path, shape, values).
pub(crate) fn parse_tensor_line(line: &str) -> Result<(String, Vec<usize>, Vec<f64>)> {
    let mut parts = line.split_ascii_whitespace();
    let path = parts
        .next()
        .ok_or_else(|| Error::format(None, "tensor line missing path"))?
        .to_string();
    let shape_txt = parts.next().ok_or_else(|| Error::format(None, "tensor line missing shape"))?;
    let shape = shape_txt
        .split('x')
        .map(|d| d.parse::<usize>().map_err(|_| Error::format(None, format!("bad dim {d:?}"))))
        .collect::<Result<Vec<_>>>()?;
    let values = parts
        .map(|v| v.parse::<f64>().map_err(|_| Error::format(None, format!("bad value {v:?}"))))
        .collect::<Result<Vec<_>>>()?;
    if shape.iter().product::<usize>() != values.len() {
        return Err(Error::format(
            None,
            format!("tensor {path}: shape {shape_txt} does not match {} values", values.len()),
        ));
    }
    Ok((path, shape, values))
}

impl<S: Scalar> InceptoFormer<S> {
    /// Serialize config, config hash, and every parameter entry.
    pub fn checkpoint_string(&self) -> String {
        let mut out = String::new();
        out.push_str(MAGIC);
        out.push('\n');
        writeln!(out, "config-hash {}", self.config().hash()).unwrap();
        writeln!(out, "config {}", serde_json::to_string(self.config()).unwrap()).unwrap();
        for id in self.params().ids() {
            tensor_line(
                &mut out,
                "tensor",
                self.params().path(id),
                self.params().shape(id),
                self.params().data(id),
            );
        }
        out.push_str("end\n");
        out
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.checkpoint_string())?;
        Ok(())
    }

    /// Rebuild a model from checkpoint text, refusing hash mismatches.
    pub fn from_checkpoint_str(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        if lines.next() != Some(MAGIC) {
            return Err(Error::format(None, format!("not a checkpoint (expected {MAGIC:?})")));
        }
        let hash_line = lines.next().unwrap_or_default();
        let stored_hash = hash_line
            .strip_prefix("config-hash ")
            .ok_or_else(|| Error::format(None, "missing config-hash line"))?;
        let config_line = lines.next().unwrap_or_default();
        let config_json = config_line
            .strip_prefix("config ")
            .ok_or_else(|| Error::format(None, "missing config line"))?;
        let config: ModelConfig = serde_json::from_str(config_json)
            .map_err(|e| Error::format(None, format!("bad config json: {e}")))?;
        if config.hash() != stored_hash {
            return Err(Error::format(
                None,
                format!("config hash mismatch: stored {stored_hash}, computed {}", config.hash()),
            ));
        }
        let mut model = InceptoFormer::new(&config, 0)?;
        let mut loaded = 0usize;
        for line in lines {
            if line == "end" {
                break;
            }
            let body = line
                .strip_prefix("tensor ")
                .ok_or_else(|| Error::format(None, format!("unexpected line {line:?}")))?;
            let (path, shape, values) = parse_tensor_line(body)?;
            let id = model
                .params()
                .lookup(&path)
                .ok_or_else(|| Error::format(None, format!("unknown tensor {path:?}")))?;
            if model.params().shape(id) != shape {
                return Err(Error::format(
                    None,
                    format!("tensor {path}: shape {shape:?} vs expected {:?}", model.params().shape(id)),
                ));
            }
            let dst = model.params_mut().data_mut(id);
            for (d, v) in dst.iter_mut().zip(values) {
                *d = S::from_f64_c(v);
            }
            loaded += 1;
        }
        if loaded != model.params().len() {
            return Err(Error::format(
                None,
                format!("checkpoint holds {loaded} tensors, model needs {}", model.params().len()),
            ));
        }
        Ok(model)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::format(path.to_str(), format!("cannot read checkpoint: {e}")))?;
        Self::from_checkpoint_str(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::super::ModelConfig;
    use super::*;

    fn tiny() -> ModelConfig {
        ModelConfig {
            n_signals: 2,
            segment_len: 10,
            filters_per_stream: 2,
            reduced_dim: 4,
            classifier_widths: vec![8, 4],
            ..ModelConfig::default()
        }
    }

    #[test]
    fn round_trip_reproduces_bit_identical_logits() {
        let mut model: InceptoFormer<f64> = InceptoFormer::new(&tiny(), 42).unwrap();
        let batch: Vec<f64> = (0..2 * 20).map(|i| (i as f64 * 0.17).sin() * 25.0).collect();
        let before = model.predict(&batch, 2).unwrap().probabilities;
        let text = model.checkpoint_string();
        let mut reloaded: InceptoFormer<f64> = InceptoFormer::from_checkpoint_str(&text).unwrap();
        let after = reloaded.predict(&batch, 2).unwrap().probabilities;
        assert!(before.iter().zip(&after).all(|(a, b)| a.to_bits() == b.to_bits()));
    }

    #[test]
    fn hash_mismatch_is_refused() {
        let model: InceptoFormer<f64> = InceptoFormer::new(&tiny(), 42).unwrap();
        let text = model.checkpoint_string();
        // tamper with the config line (change a width) without updating the hash
        let tampered = text.replace("\"reduced_dim\":4", "\"reduced_dim\":8");
        let err = InceptoFormer::<f64>::from_checkpoint_str(&tampered).unwrap_err().to_string();
        assert!(err.contains("hash mismatch"), "{err}");
    }

    #[test]
    fn truncated_checkpoint_is_rejected() {
        let model: InceptoFormer<f64> = InceptoFormer::new(&tiny(), 42).unwrap();
        let text = model.checkpoint_string();
        let cut: String = text.lines().take(5).collect::<Vec<_>>().join("\n");
        assert!(InceptoFormer::<f64>::from_checkpoint_str(&cut).is_err());
    }
}
