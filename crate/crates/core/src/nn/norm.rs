//! Batch and layer normalization.

use super::params::{ones, zeros, ParamId, Params};
use super::{Forward, Mode};
use crate::error::Result;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Per-channel batch normalization over `[B, C, T]`.
///
/// Train mode normalizes with batch statistics over (batch, time) and
/// updates running statistics by exponential moving average; eval mode uses
/// the stored running statistics and is fully deterministic.
pub struct BatchNorm1D {
    pub gamma: ParamId,
    pub beta: ParamId,
    pub running_mean: ParamId,
    pub running_var: ParamId,
    pub channels: usize,
    pub momentum: f64,
    pub epsilon: f64,
}

impl BatchNorm1D {
    pub fn new<S: Scalar>(params: &mut Params<S>, path: &str, channels: usize) -> Self {
        let gamma = params.add(&format!("{path}.gamma"), vec![channels], ones(channels), true);
        let beta = params.add(&format!("{path}.beta"), vec![channels], zeros(channels), true);
        let running_mean =
            params.add(&format!("{path}.running_mean"), vec![channels], zeros(channels), false);
        let running_var =
            params.add(&format!("{path}.running_var"), vec![channels], ones(channels), false);
        BatchNorm1D { gamma, beta, running_mean, running_var, channels, momentum: 0.1, epsilon: 1e-5 }
    }

    pub fn forward<S: Scalar>(&self, fwd: &mut Forward<S>, x: &Tensor<S>) -> Result<Tensor<S>> {
        let gamma = fwd.bind(self.gamma)?;
        let beta = fwd.bind(self.beta)?;
        match fwd.mode {
            Mode::Eval => {
                let rm = fwd.params.data(self.running_mean).to_vec();
                let rv = fwd.params.data(self.running_var).to_vec();
                x.batchnorm_eval(&gamma, &beta, &rm, &rv, self.epsilon)
            }
            Mode::Train => {
                let (y, mean, var) = x.batchnorm_train(&gamma, &beta, self.epsilon)?;
                let mom = S::from_f64_c(self.momentum);
                let keep = S::one() - mom;
                for (r, m) in fwd.params.data_mut(self.running_mean).iter_mut().zip(&mean) {
                    *r = keep * *r + mom * *m;
                }
                for (r, v) in fwd.params.data_mut(self.running_var).iter_mut().zip(&var) {
                    *r = keep * *r + mom * *v;
                }
                Ok(y)
            }
            Mode::Deterministic => {
                let (y, _, _) = x.batchnorm_train(&gamma, &beta, self.epsilon)?;
                Ok(y)
            }
        }
    }
}

/// Layer normalization over the last axis.
pub struct LayerNorm {
    pub gamma: ParamId,
    pub beta: ParamId,
    pub dim: usize,
    pub epsilon: f64,
}

impl LayerNorm {
    pub fn new<S: Scalar>(params: &mut Params<S>, path: &str, dim: usize) -> Self {
        let gamma = params.add(&format!("{path}.gamma"), vec![dim], ones(dim), true);
        let beta = params.add(&format!("{path}.beta"), vec![dim], zeros(dim), true);
        LayerNorm { gamma, beta, dim, epsilon: 1e-5 }
    }

    pub fn forward<S: Scalar>(&self, fwd: &mut Forward<S>, x: &Tensor<S>) -> Result<Tensor<S>> {
        let gamma = fwd.bind(self.gamma)?;
        let beta = fwd.bind(self.beta)?;
        x.layer_norm(&gamma, &beta, self.epsilon)
    }
}
