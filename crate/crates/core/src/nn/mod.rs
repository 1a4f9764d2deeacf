//! Trainable layers: convolution streams, Inception blocks, normalization,
//! dense projections, two-head attention, feed-forward, positional encoding.

mod attention;
mod conv;
mod dense;
mod inception;
mod norm;
mod pe;
pub mod params;
mod transformer;

pub use attention::MultiHeadAttention;
pub use conv::Conv1D;
pub use dense::Dense;
pub use inception::InceptionBlock1D;
pub use norm::{BatchNorm1D, LayerNorm};
pub use params::{ParamId, Params};
pub use pe::PositionalEncoding;
pub use transformer::{FeedForward, TransformerEncoderBlock};

use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::scalar::Scalar;
use crate::tensor::gradcheck::{gradcheck, GradCheckReport};
use crate::tensor::{Tape, Tensor};

/// Forward-pass regime.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Batch statistics, running-stat updates, dropout active.
    Train,
    /// Running statistics, no updates, dropout off.
    Eval,
    /// Batch statistics but no state updates and no dropout; used by
    /// gradient checking, where repeated forwards must be identical.
    Deterministic,
}

/// Everything a layer needs while recording one forward pass.
pub struct Forward<'a, S: Scalar> {
    pub tape: &'a Tape<S>,
    pub params: &'a mut Params<S>,
    pub mode: Mode,
    pub rng: &'a mut ChaCha8Rng,
    /// Parameter-to-leaf bindings recorded as layers bind their weights.
    pub bindings: Vec<(ParamId, Tensor<S>)>,
}

impl<'a, S: Scalar> Forward<'a, S> {
    pub fn new(
        tape: &'a Tape<S>,
        params: &'a mut Params<S>,
        mode: Mode,
        rng: &'a mut ChaCha8Rng,
    ) -> Self {
        Forward { tape, params, mode, rng, bindings: Vec::new() }
    }

    /// Bind a stored parameter onto the tape as a leaf tensor.
    pub fn bind(&mut self, id: ParamId) -> Result<Tensor<S>> {
        let requires_grad = self.params.is_trainable(id) && self.mode != Mode::Eval;
        let t = self.tape.leaf(
            self.params.data(id).to_vec(),
            &self.params.shape(id).to_vec(),
            requires_grad,
        )?;
        self.bindings.push((id, t.clone()));
        Ok(t)
    }

    /// Apply dropout in train mode; identity otherwise.
    pub fn maybe_dropout(&mut self, x: &Tensor<S>, rate: f64) -> Result<Tensor<S>> {
        if self.mode == Mode::Train && rate > 0.0 {
            x.dropout(rate, self.rng)
        } else {
            Ok(x.clone())
        }
    }
}

/// Gradient-check a module built from stored parameters.
///
/// `build` runs one deterministic forward pass and returns the scalar loss.
/// Every trainable entry of `params` is perturbed by central differences and
/// compared with the analytic gradient from the recorded graph. The returned
/// report's `worst` indices refer to `trainable_ids()` order.
pub fn gradcheck_module<S, F>(
    params: &mut Params<S>,
    mut build: F,
    eps: f64,
    tol: f64,
) -> Result<GradCheckReport>
where
    S: Scalar,
    F: FnMut(&mut Forward<S>) -> Result<Tensor<S>>,
{
    use rand::SeedableRng;
    let trainable = params.trainable_ids();
    let mut theta: Vec<Vec<S>> = trainable.iter().map(|&id| params.data(id).to_vec()).collect();
    gradcheck(
        &mut theta,
        |tape, theta| {
            for (&id, values) in trainable.iter().zip(theta) {
                params.data_mut(id).copy_from_slice(values);
            }
            let mut rng = ChaCha8Rng::seed_from_u64(0);
            let mut fwd = Forward::new(tape, params, Mode::Deterministic, &mut rng);
            let loss = build(&mut fwd)?;
            let leaves = trainable
                .iter()
                .map(|&id| {
                    fwd.bindings
                        .iter()
                        .find(|(bid, _)| *bid == id)
                        .map(|(_, t)| Ok(t.clone()))
                        // a parameter the variant never touches: zero-gradient leaf
                        .unwrap_or_else(|| {
                            tape.leaf(
                                fwd.params.data(id).to_vec(),
                                &fwd.params.shape(id).to_vec(),
                                true,
                            )
                        })
                })
                .collect::<Result<Vec<_>>>()?;
            Ok((loss, leaves))
        },
        eps,
        tol,
    )
}

/// Human-readable location of a gradcheck report's worst offender.
pub fn describe_worst<S: Scalar>(params: &Params<S>, report: &GradCheckReport) -> String {
    match &report.worst {
        Some(w) => {
            let trainable = params.trainable_ids();
            let path = trainable
                .get(w.param)
                .map(|&id| params.path(id).to_string())
                .unwrap_or_else(|| format!("param[{}]", w.param));
            format!(
                "{}[{}]: analytic {:.6e} vs numeric {:.6e}",
                path, w.index, w.analytic, w.numeric
            )
        }
        None => "no parameters checked".to_string(),
    }
}
