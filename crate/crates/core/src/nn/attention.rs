//! Scaled dot-product self-attention with a small number of heads.

use rand::Rng;

use super::dense::Dense;
use super::params::Params;
use super::Forward;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub struct MultiHeadAttention {
    pub wq: Dense,
    pub wk: Dense,
    pub wv: Dense,
    pub wo: Dense,
    pub heads: usize,
    pub d_model: usize,
    pub head_dim: usize,
}

impl MultiHeadAttention {
    pub fn new<S: Scalar, R: Rng>(
        params: &mut Params<S>,
        rng: &mut R,
        path: &str,
        d_model: usize,
        heads: usize,
    ) -> Result<Self> {
        if heads == 0 || d_model % heads != 0 {
            return Err(Error::config(
                "heads",
                format!("d_model {d_model} must be divisible by heads {heads}"),
            ));
        }
        // bias-free projection matrices; a key bias would shift every score
        // in a softmax row equally and could never receive gradient
        Ok(MultiHeadAttention {
            wq: Dense::new_linear(params, rng, &format!("{path}.wq"), d_model, d_model),
            wk: Dense::new_linear(params, rng, &format!("{path}.wk"), d_model, d_model),
            wv: Dense::new_linear(params, rng, &format!("{path}.wv"), d_model, d_model),
            wo: Dense::new_linear(params, rng, &format!("{path}.wo"), d_model, d_model),
            heads,
            d_model,
            head_dim: d_model / heads,
        })
    }

    pub fn forward<S: Scalar>(&self, fwd: &mut Forward<S>, x: &Tensor<S>) -> Result<Tensor<S>> {
        Ok(self.forward_detailed(fwd, x)?.0)
    }

    /// Forward pass that also returns the attention weights `[B, H, L, L]`
    /// (softmax rows, one per query position and head).
    pub fn forward_detailed<S: Scalar>(
        &self,
        fwd: &mut Forward<S>,
        x: &Tensor<S>,
    ) -> Result<(Tensor<S>, Tensor<S>)> {
        let (x3, was_2d) = match x.rank() {
            2 => (x.reshape(&[1, x.shape()[0], x.shape()[1]])?, true),
            3 => (x.clone(), false),
            _ => return Err(Error::dim("attention_forward", x.shape(), "rank 2 or 3")),
        };
        let (b, l, d) = (x3.shape()[0], x3.shape()[1], x3.shape()[2]);
        if d != self.d_model {
            return Err(Error::dim("attention_forward", x3.shape(), [self.d_model]));
        }
        let split = |t: &Tensor<S>| -> Result<Tensor<S>> {
            t.reshape(&[b, l, self.heads, self.head_dim])?.swap_axes12()
        };
        let q = split(&self.wq.forward(fwd, &x3)?)?;
        let k = split(&self.wk.forward(fwd, &x3)?)?;
        let v = split(&self.wv.forward(fwd, &x3)?)?;
        let scale = 1.0 / (self.head_dim as f64).sqrt();
        let scores = q.bmm(&k, true)?.scale(scale)?;
        let weights = scores.softmax()?;
        let ctx = weights.bmm(&v, false)?.swap_axes12()?.reshape(&[b, l, d])?;
        let out = self.wo.forward(fwd, &ctx)?;
        let out = if was_2d { out.reshape(&[l, d])? } else { out };
        Ok((out, weights))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{gradcheck_module, Mode};
    use crate::tensor::Tape;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn identity_matrix(d: usize) -> Vec<f64> {
        let mut m = vec![0.0; d * d];
        for i in 0..d {
            m[i * d + i] = 1.0;
        }
        m
    }

    #[test]
    fn single_token_attends_to_itself() {
        let mut params: Params<f64> = Params::new();
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let mha = MultiHeadAttention::new(&mut params, &mut rng, "attn", 4, 2).unwrap();
        let tape = Tape::new();
        let mut r = ChaCha8Rng::seed_from_u64(0);
        let mut fwd = Forward::new(&tape, &mut params, Mode::Eval, &mut r);
        let x = tape.constant(vec![0.3, -0.8, 1.1, 0.5], &[1, 4]).unwrap();
        let (out, weights) = mha.forward_detailed(&mut fwd, &x).unwrap();
        assert_eq!(weights.data(), vec![1.0, 1.0]); // one weight per head
        // out = wo(wv(x)) since attention over one token is identity
        let wv = params.data(mha.wv.w).to_vec();
        let wo = params.data(mha.wo.w).to_vec();
        let xv = [0.3, -0.8, 1.1, 0.5];
        let mut v = [0.0f64; 4];
        for j in 0..4 {
            for i in 0..4 {
                v[j] += xv[i] * wv[i * 4 + j];
            }
        }
        let mut expect = [0.0f64; 4];
        for j in 0..4 {
            for i in 0..4 {
                expect[j] += v[i] * wo[i * 4 + j];
            }
        }
        for (a, e) in out.data().iter().zip(expect) {
            assert!((a - e).abs() < 1e-12);
        }
    }

    #[test]
    fn identical_tokens_give_identical_rows() {
        let mut params: Params<f64> = Params::new();
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let mha = MultiHeadAttention::new(&mut params, &mut rng, "attn", 4, 2).unwrap();
        for d in [mha.wq.w, mha.wk.w, mha.wv.w, mha.wo.w] {
            params.data_mut(d).copy_from_slice(&identity_matrix(4));
        }
        let tape = Tape::new();
        let mut r = ChaCha8Rng::seed_from_u64(0);
        let mut fwd = Forward::new(&tape, &mut params, Mode::Eval, &mut r);
        let token = [0.7, -0.1, 0.4, 1.2];
        let x = tape.constant([token, token].concat(), &[2, 4]).unwrap();
        let out = mha.forward(&mut fwd, &x).unwrap().data();
        assert_eq!(out[..4], out[4..]);
    }

    #[test]
    fn attention_rows_sum_to_one_in_every_head() {
        let mut params: Params<f64> = Params::new();
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let mha = MultiHeadAttention::new(&mut params, &mut rng, "attn", 6, 2).unwrap();
        let tape = Tape::new();
        let mut r = ChaCha8Rng::seed_from_u64(0);
        let mut fwd = Forward::new(&tape, &mut params, Mode::Eval, &mut r);
        let x = tape
            .constant((0..3 * 6).map(|i| (i as f64 * 0.37).sin()).collect(), &[3, 6])
            .unwrap();
        let (_, weights) = mha.forward_detailed(&mut fwd, &x).unwrap();
        assert_eq!(weights.shape(), &[1, 2, 3, 3]);
        for row in weights.data().chunks(3) {
            let s: f64 = row.iter().sum();
            assert!((s - 1.0).abs() < 1e-9);
            assert!(row.iter().all(|&v| v >= 0.0));
        }
    }

    #[test]
    fn rejects_d_model_mismatch() {
        let mut params: Params<f64> = Params::new();
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        let mha = MultiHeadAttention::new(&mut params, &mut rng, "attn", 4, 2).unwrap();
        let tape = Tape::new();
        let mut r = ChaCha8Rng::seed_from_u64(0);
        let mut fwd = Forward::new(&tape, &mut params, Mode::Eval, &mut r);
        let x = tape.constant(vec![0.0; 6], &[1, 6]).unwrap();
        assert!(mha.forward(&mut fwd, &x).is_err());
    }

    #[test]
    fn gradcheck_two_head_attention() {
        let mut params: Params<f64> = Params::new();
        let mut rng = ChaCha8Rng::seed_from_u64(16);
        let mha = MultiHeadAttention::new(&mut params, &mut rng, "attn", 4, 2).unwrap();
        let report = gradcheck_module(
            &mut params,
            |fwd| {
                let x = fwd.tape.constant(
                    (0..3 * 4).map(|i| ((i * 13 % 7) as f64 - 3.0) / 4.0).collect(),
                    &[3, 4],
                )?;
                let y = mha.forward(fwd, &x)?;
                y.reshape(&[3, 4])?.cross_entropy(&[0, 2, 1])
            },
            1e-5,
            1e-4,
        )
        .unwrap();
        assert!(report.pass, "max rel {}", report.max_rel_error);
    }
}
