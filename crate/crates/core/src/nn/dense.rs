//! Fully connected layer applied over the last axis.

use rand::Rng;

use super::params::{lecun_normal, zeros, ParamId, Params};
use super::Forward;
use crate::error::Result;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub struct Dense {
    pub w: ParamId,
    pub b: Option<ParamId>,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl Dense {
    pub fn new<S: Scalar, R: Rng>(
        params: &mut Params<S>,
        rng: &mut R,
        path: &str,
        in_dim: usize,
        out_dim: usize,
    ) -> Self {
        let mut layer = Self::new_linear(params, rng, path, in_dim, out_dim);
        layer.b = Some(params.add(&format!("{path}.bias"), vec![out_dim], zeros(out_dim), true));
        layer
    }

    /// Pure projection without a bias term (attention projections).
    pub fn new_linear<S: Scalar, R: Rng>(
        params: &mut Params<S>,
        rng: &mut R,
        path: &str,
        in_dim: usize,
        out_dim: usize,
    ) -> Self {
        let w = params.add(
            &format!("{path}.weight"),
            vec![in_dim, out_dim],
            lecun_normal(rng, in_dim, in_dim * out_dim),
            true,
        );
        Dense { w, b: None, in_dim, out_dim }
    }

    pub fn forward<S: Scalar>(&self, fwd: &mut Forward<S>, x: &Tensor<S>) -> Result<Tensor<S>> {
        let w = fwd.bind(self.w)?;
        let y = x.matmul(&w)?;
        match self.b {
            Some(b) => y.add_bias(&fwd.bind(b)?),
            None => Ok(y),
        }
    }
}
