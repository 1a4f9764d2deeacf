//! Fixed sinusoidal positional encoding with a configurable scale.
//!
//! The table is added at a small scale (default 0.1) so positional
//! information never swamps the feature content it annotates.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub struct PositionalEncoding<S> {
    pub length: usize,
    pub dim: usize,
    pub scale: f64,
    table: Vec<S>,
    scaled: Vec<S>,
}

impl<S: Scalar> PositionalEncoding<S> {
    /// entry(pos, 2i) = sin(pos / 10000^(2i/d)), entry(pos, 2i+1) = cos(...).
    pub fn new(length: usize, dim: usize, scale: f64) -> Self {
        let mut table = vec![S::zero(); length * dim];
        for pos in 0..length {
            for i in 0..dim.div_ceil(2) {
                let rate = (pos as f64) / 10000f64.powf(2.0 * i as f64 / dim as f64);
                table[pos * dim + 2 * i] = S::from_f64_c(rate.sin());
                if 2 * i + 1 < dim {
                    table[pos * dim + 2 * i + 1] = S::from_f64_c(rate.cos());
                }
            }
        }
        let s = S::from_f64_c(scale);
        let scaled = table.iter().map(|&v| v * s).collect();
        PositionalEncoding { length, dim, scale, table, scaled }
    }

    /// The raw (unscaled) table, rows = positions.
    pub fn table(&self) -> &[S] {
        &self.table
    }

    /// Add the scaled table to `x`, which must end in `[length, dim]` axes.
    pub fn apply(&self, x: &Tensor<S>) -> Result<Tensor<S>> {
        let shape = x.shape();
        if shape.len() < 2
            || shape[shape.len() - 2] != self.length
            || shape[shape.len() - 1] != self.dim
        {
            return Err(Error::dim("positional_encode", shape, [self.length, self.dim]));
        }
        x.add_table(&self.scaled)
    }
}
