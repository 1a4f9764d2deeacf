//! Flat parameter store shared by all layers of one model.
//!
//! Layers hold [`ParamId`]s into the store; the store itself is plain data,
//! so snapshots (checkpoints, best-epoch copies) are cheap clones and
//! optimizer state can mirror it index-for-index. Non-trainable entries
//! (batch-norm running statistics) live here too so checkpoints are
//! self-contained.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct ParamId(usize);

#[derive(Clone)]
pub(crate) struct Entry<S> {
    pub path: String,
    pub shape: Vec<usize>,
    pub data: Vec<S>,
    pub trainable: bool,
}

#[derive(Clone, Default)]
pub struct Params<S> {
    entries: Vec<Entry<S>>,
}

impl<S: Scalar> Params<S> {
    pub fn new() -> Self {
        Params { entries: Vec::new() }
    }

    pub fn add(&mut self, path: &str, shape: Vec<usize>, data: Vec<S>, trainable: bool) -> ParamId {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len(), "{path}");
        let id = ParamId(self.entries.len());
        self.entries.push(Entry { path: path.to_string(), shape, data, trainable });
        id
    }

    pub fn data(&self, id: ParamId) -> &[S] {
        &self.entries[id.0].data
    }

    pub fn data_mut(&mut self, id: ParamId) -> &mut [S] {
        &mut self.entries[id.0].data
    }

    pub fn shape(&self, id: ParamId) -> &[usize] {
        &self.entries[id.0].shape
    }

    pub fn path(&self, id: ParamId) -> &str {
        &self.entries[id.0].path
    }

    pub fn is_trainable(&self, id: ParamId) -> bool {
        self.entries[id.0].trainable
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.entries.len()).map(ParamId)
    }

    pub fn trainable_ids(&self) -> Vec<ParamId> {
        (0..self.entries.len()).filter(|&i| self.entries[i].trainable).map(ParamId).collect()
    }

    /// Total scalar count across all entries.
    pub fn n_scalars(&self) -> usize {
        self.entries.iter().map(|e| e.data.len()).sum()
    }

    /// Scalar count across trainable entries only.
    pub fn n_trainable_scalars(&self) -> usize {
        self.entries.iter().filter(|e| e.trainable).map(|e| e.data.len()).sum()
    }

    /// Trainable scalar count restricted to paths matching a predicate.
    pub fn n_trainable_scalars_where(&self, pred: impl Fn(&str) -> bool) -> usize {
        self.entries
            .iter()
            .filter(|e| e.trainable && pred(&e.path))
            .map(|e| e.data.len())
            .sum()
    }

    pub fn lookup(&self, path: &str) -> Option<ParamId> {
        self.entries.iter().position(|e| e.path == path).map(ParamId)
    }

    pub fn all_finite(&self) -> bool {
        self.entries.iter().all(|e| e.data.iter().all(|v| v.is_finite()))
    }

    /// Copy another store's values into this one. Structures must agree.
    pub fn copy_from(&mut self, other: &Params<S>) -> Result<()> {
        if self.entries.len() != other.entries.len() {
            return Err(Error::Contract {
                message: format!(
                    "parameter store mismatch: {} vs {} entries",
                    self.entries.len(),
                    other.entries.len()
                ),
            });
        }
        for (dst, src) in self.entries.iter_mut().zip(&other.entries) {
            if dst.path != src.path || dst.shape != src.shape {
                return Err(Error::Contract {
                    message: format!("parameter mismatch at {} vs {}", dst.path, src.path),
                });
            }
            dst.data.copy_from_slice(&src.data);
        }
        Ok(())
    }

    pub(crate) fn entries(&self) -> &[Entry<S>] {
        &self.entries
    }
}

/// LeCun normal initialization: std = 1/sqrt(fan_in), mean 0.
pub fn lecun_normal<S: Scalar, R: Rng>(rng: &mut R, fan_in: usize, n: usize) -> Vec<S> {
    let std = 1.0 / (fan_in.max(1) as f64).sqrt();
    let dist = Normal::new(0.0, std).expect("valid normal");
    (0..n).map(|_| S::from_f64_c(dist.sample(rng))).collect()
}

pub fn zeros<S: Scalar>(n: usize) -> Vec<S> {
    vec![S::zero(); n]
}

pub fn ones<S: Scalar>(n: usize) -> Vec<S> {
    vec![S::one(); n]
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn store_round_trip() {
        let mut p: Params<f64> = Params::new();
        let id = p.add("layer.weight", vec![2, 2], vec![1.0, 2.0, 3.0, 4.0], true);
        assert_eq!(p.data(id), &[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(p.path(id), "layer.weight");
        assert_eq!(p.n_trainable_scalars(), 4);
        p.data_mut(id)[0] = 9.0;
        assert_eq!(p.data(id)[0], 9.0);
    }

    #[test]
    fn lecun_scale_shrinks_with_fan_in() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let wide: Vec<f64> = lecun_normal(&mut rng, 10_000, 2000);
        let var: f64 = wide.iter().map(|v| v * v).sum::<f64>() / wide.len() as f64;
        assert!((var - 1.0 / 10_000.0).abs() < 2e-5, "observed var {var}");
    }

    #[test]
    fn deterministic_under_seed() {
        let mut a = ChaCha8Rng::seed_from_u64(42);
        let mut b = ChaCha8Rng::seed_from_u64(42);
        let x: Vec<f64> = lecun_normal(&mut a, 16, 64);
        let y: Vec<f64> = lecun_normal(&mut b, 16, 64);
        assert_eq!(x, y);
    }
}
