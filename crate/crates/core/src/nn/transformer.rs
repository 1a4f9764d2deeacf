//! Post-norm transformer encoder block: attention and feed-forward
//! sub-layers with residual connections, mirroring the BERT encoder layout.

use rand::Rng;

use super::attention::MultiHeadAttention;
use super::dense::Dense;
use super::norm::LayerNorm;
use super::params::Params;
use super::Forward;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Two dense layers: expansion, SeLU, projection back to `d_model`.
pub struct FeedForward {
    pub lift: Dense,
    pub proj: Dense,
}

impl FeedForward {
    pub fn new<S: Scalar, R: Rng>(
        params: &mut Params<S>,
        rng: &mut R,
        path: &str,
        d_model: usize,
        hidden: usize,
    ) -> Self {
        FeedForward {
            lift: Dense::new(params, rng, &format!("{path}.lift"), d_model, hidden),
            proj: Dense::new(params, rng, &format!("{path}.proj"), hidden, d_model),
        }
    }

    pub fn forward<S: Scalar>(&self, fwd: &mut Forward<S>, x: &Tensor<S>) -> Result<Tensor<S>> {
        let h = self.lift.forward(fwd, x)?.selu()?;
        self.proj.forward(fwd, &h)
    }
}

pub struct TransformerEncoderBlock {
    pub attention: MultiHeadAttention,
    pub norm1: LayerNorm,
    pub norm2: LayerNorm,
    pub ffn: FeedForward,
    pub dropout: f64,
    pub d_model: usize,
}

impl TransformerEncoderBlock {
    /// Feed-forward hidden width follows the 4x convention.
    pub fn new<S: Scalar, R: Rng>(
        params: &mut Params<S>,
        rng: &mut R,
        path: &str,
        d_model: usize,
        heads: usize,
        dropout: f64,
    ) -> Result<Self> {
        Ok(TransformerEncoderBlock {
            attention: MultiHeadAttention::new(params, rng, &format!("{path}.attn"), d_model, heads)?,
            norm1: LayerNorm::new(params, &format!("{path}.norm1"), d_model),
            norm2: LayerNorm::new(params, &format!("{path}.norm2"), d_model),
            ffn: FeedForward::new(params, rng, &format!("{path}.ffn"), d_model, 4 * d_model),
            dropout,
            d_model,
        })
    }

    /// `norm2(h + ffn(h))` with `h = norm1(x + attention(x))`; dropout on
    /// each sub-layer output, active only in train mode.
    pub fn forward<S: Scalar>(&self, fwd: &mut Forward<S>, x: &Tensor<S>) -> Result<Tensor<S>> {
        let (x3, was_2d) = match x.rank() {
            2 => (x.reshape(&[1, x.shape()[0], x.shape()[1]])?, true),
            3 => (x.clone(), false),
            _ => return Err(Error::dim("transformer_block_forward", x.shape(), "rank 2 or 3")),
        };
        let attn = self.attention.forward(fwd, &x3)?;
        let attn = fwd.maybe_dropout(&attn, self.dropout)?;
        let h = self.norm1.forward(fwd, &x3.add(&attn)?)?;
        let f = self.ffn.forward(fwd, &h)?;
        let f = fwd.maybe_dropout(&f, self.dropout)?;
        let out = self.norm2.forward(fwd, &h.add(&f)?)?;
        if was_2d {
            out.reshape(&[x.shape()[0], x.shape()[1]])
        } else {
            Ok(out)
        }
    }
}
