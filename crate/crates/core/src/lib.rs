//! InceptoFormer: multi-signal gait severity staging.
//!
//! The crate is organized around the pipeline stages: a tensor core with
//! reverse-mode differentiation, trainable layers, the full model, the VGRF
//! data pipeline, Nadam training, and cross-validated evaluation. All numeric
//! code is generic over [`scalar::Scalar`]; the aliases below pin the f64
//! default used throughout the tooling.

pub mod data;
pub mod error;
pub mod eval;
pub mod scalar;
pub mod model;
pub mod nn;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// Derive an independent stream seed from a master seed (splitmix64 round).
/// Fold workers, record generators and epoch RNGs all key off this, so runs
/// reproduce exactly regardless of execution order.
pub fn derive_seed(master: u64, stream: u64) -> u64 {
    let mut z = master.wrapping_add(stream.wrapping_mul(0x9E3779B97F4A7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    z ^ (z >> 31)
}

/// Default-precision tape (f64).
pub type Tape64 = tensor::Tape<f64>;
/// Default-precision tensor (f64).
pub type Tensor64 = tensor::Tensor<f64>;
/// Single-precision tape.
pub type Tape32 = tensor::Tape<f32>;
/// Single-precision tensor.
pub type Tensor32 = tensor::Tensor<f32>;
