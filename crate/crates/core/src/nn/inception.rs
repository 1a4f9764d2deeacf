//! Inception block for 1D signals: parallel convolution streams at several
//! kernel sizes, concatenated along channels, then batch-normalized.

use rand::Rng;

use super::conv::Conv1D;
use super::norm::BatchNorm1D;
use super::params::Params;
use super::Forward;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::{concat, Tensor};

pub struct InceptionBlock1D {
    pub streams: Vec<Conv1D>,
    pub batchnorm: BatchNorm1D,
    pub cin: usize,
    pub cout: usize,
}

impl InceptionBlock1D {
    /// One stream of `filters` channels per kernel size; output channel
    /// count is `filters * kernel_sizes.len()`.
    pub fn new<S: Scalar, R: Rng>(
        params: &mut Params<S>,
        rng: &mut R,
        path: &str,
        cin: usize,
        filters: usize,
        kernel_sizes: &[usize],
    ) -> Result<Self> {
        if kernel_sizes.is_empty() {
            return Err(Error::config("kernel_sizes", "at least one kernel size required"));
        }
        let streams = kernel_sizes
            .iter()
            .map(|&k| Conv1D::new(params, rng, &format!("{path}.conv_k{k}"), cin, filters, k))
            .collect::<Result<Vec<_>>>()?;
        let cout = filters * kernel_sizes.len();
        let batchnorm = BatchNorm1D::new(params, &format!("{path}.bn"), cout);
        Ok(InceptionBlock1D { streams, batchnorm, cin, cout })
    }

    /// Forward pass over `[B, C_in, T]` (or `[C_in, T]`): every stream sees
    /// the identical input; outputs are SeLU-activated, concatenated along
    /// channels, batch-normalized, then activated again.
    pub fn forward<S: Scalar>(&self, fwd: &mut Forward<S>, x: &Tensor<S>) -> Result<Tensor<S>> {
        let (x3, was_2d) = match x.rank() {
            2 => (x.reshape(&[1, x.shape()[0], x.shape()[1]])?, true),
            3 => (x.clone(), false),
            _ => return Err(Error::dim("inception_forward", x.shape(), "rank 2 or 3")),
        };
        if x3.shape()[1] != self.cin {
            return Err(Error::dim("inception_forward", x3.shape(), [self.cin]));
        }
        let activated = self
            .streams
            .iter()
            .map(|s| s.forward(fwd, &x3)?.selu())
            .collect::<Result<Vec<_>>>()?;
        let merged = concat(1, &activated)?;
        let normed = self.batchnorm.forward(fwd, &merged)?;
        let out = normed.selu()?;
        if was_2d {
            out.reshape(&[self.cout, x.shape()[1]])
        } else {
            Ok(out)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{gradcheck_module, Mode};
    use crate::scalar::{selu_alpha, selu_scale};
    use crate::tensor::Tape;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn selu(x: f64) -> f64 {
        let (a, l) = (selu_alpha::<f64>(), selu_scale::<f64>());
        if x > 0.0 { l * x } else { l * a * (x.exp() - 1.0) }
    }

    #[test]
    fn zero_input_propagates_to_zero_output() {
        let mut params: Params<f64> = Params::new();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let block = InceptionBlock1D::new(&mut params, &mut rng, "inc", 1, 32, &[1, 3, 5]).unwrap();
        // zero biases keep the streams at zero; batch stats of zeros with
        // beta=0 normalize to zero
        let tape = Tape::new();
        let mut r = ChaCha8Rng::seed_from_u64(0);
        let mut fwd = Forward::new(&tape, &mut params, Mode::Deterministic, &mut r);
        let x = tape.constant(vec![0.0; 100], &[1, 100]).unwrap();
        let y = block.forward(&mut fwd, &x).unwrap();
        assert_eq!(y.shape(), &[96, 100]);
        assert!(y.data().iter().all(|&v| v.abs() < 1e-12));
    }

    #[test]
    fn output_channels_are_three_times_filters() {
        for filters in [4usize, 8, 32] {
            let mut params: Params<f64> = Params::new();
            let mut rng = ChaCha8Rng::seed_from_u64(4);
            let block =
                InceptionBlock1D::new(&mut params, &mut rng, "inc", 2, filters, &[1, 3, 5]).unwrap();
            let tape = Tape::new();
            let mut r = ChaCha8Rng::seed_from_u64(0);
            let mut fwd = Forward::new(&tape, &mut params, Mode::Deterministic, &mut r);
            let x = tape.constant(vec![0.5; 2 * 2 * 7], &[2, 2, 7]).unwrap();
            let y = block.forward(&mut fwd, &x).unwrap();
            assert_eq!(y.shape(), &[2, 3 * filters, 7]);
        }
    }

    #[test]
    fn k1_identity_stream_hand_trace() {
        // k1 stream weight 1 (its 32nd..0th filter? use filters=1 for clarity),
        // other streams zero; eval mode keeps batchnorm at its identity-like
        // initial statistics, so channel 0 is selu(selu(x) / sqrt(1 + eps)).
        let mut params: Params<f64> = Params::new();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let block = InceptionBlock1D::new(&mut params, &mut rng, "inc", 1, 1, &[1, 3, 5]).unwrap();
        params.data_mut(block.streams[0].w).copy_from_slice(&[1.0]);
        for s in &block.streams[1..] {
            params.data_mut(s.w).iter_mut().for_each(|v| *v = 0.0);
        }
        let tape = Tape::new();
        let mut r = ChaCha8Rng::seed_from_u64(0);
        let mut fwd = Forward::new(&tape, &mut params, Mode::Eval, &mut r);
        let xs = [0.7, -1.3, 2.1, 0.0];
        let x = tape.constant(xs.to_vec(), &[1, 4]).unwrap();
        let y = block.forward(&mut fwd, &x).unwrap().data();
        let inv = 1.0 / (1.0f64 + 1e-5).sqrt();
        for (t, &xv) in xs.iter().enumerate() {
            let expect = selu(selu(xv) * inv);
            assert!((y[t] - expect).abs() < 1e-12, "t={t}: {} vs {expect}", y[t]);
        }
    }

    #[test]
    fn gradcheck_inception_block() {
        let mut params: Params<f64> = Params::new();
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let block = InceptionBlock1D::new(&mut params, &mut rng, "inc", 1, 2, &[1, 3]).unwrap();
        let report = gradcheck_module(
            &mut params,
            |fwd| {
                let x = fwd
                    .tape
                    .constant(vec![0.5, -0.3, 0.8, 0.1, -0.6, 0.9, 0.2, -0.7], &[2, 1, 4])?;
                let y = block.forward(fwd, &x)?;
                y.reshape(&[2, 16])?
                    .matmul(&fwd.tape.constant((0..16 * 2).map(|i| (i % 5) as f64 / 5.0 - 0.4).collect(), &[16, 2])?)?
                    .cross_entropy(&[0, 1])
            },
            1e-5,
            1e-4,
        )
        .unwrap();
        assert!(report.pass, "max rel {}", report.max_rel_error);
    }
}
