//! Trainable same-padded 1D convolution.

use rand::Rng;

use super::params::{lecun_normal, zeros, ParamId, Params};
use super::Forward;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub struct Conv1D {
    pub w: ParamId,
    pub b: ParamId,
    pub cin: usize,
    pub cout: usize,
    pub kernel: usize,
}

impl Conv1D {
    pub fn new<S: Scalar, R: Rng>(
        params: &mut Params<S>,
        rng: &mut R,
        path: &str,
        cin: usize,
        cout: usize,
        kernel: usize,
    ) -> Result<Self> {
        if kernel % 2 == 0 {
            return Err(Error::config("kernel_size", format!("must be odd, got {kernel}")));
        }
        let fan_in = cin * kernel;
        let w = params.add(
            &format!("{path}.weight"),
            vec![cout, cin, kernel],
            lecun_normal(rng, fan_in, cout * fan_in),
            true,
        );
        let b = params.add(&format!("{path}.bias"), vec![cout], zeros(cout), true);
        Ok(Conv1D { w, b, cin, cout, kernel })
    }

    pub fn forward<S: Scalar>(&self, fwd: &mut Forward<S>, x: &Tensor<S>) -> Result<Tensor<S>> {
        let w = fwd.bind(self.w)?;
        let b = fwd.bind(self.b)?;
        x.conv1d(&w, &b)
    }
}
