//! Nadam: Adam moments with Nesterov look-ahead in the first-moment
//! bias correction.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::nn::{ParamId, Params};
use crate::scalar::Scalar;

pub struct NadamState<S> {
    pub step: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eta: f64,
    pub epsilon: f64,
    ids: Vec<ParamId>,
    m: Vec<Vec<S>>,
    v: Vec<Vec<S>>,
}

impl<S: Scalar> NadamState<S> {
    /// Fresh state mirroring the trainable entries of `params`.
    pub fn new(params: &Params<S>, eta: f64) -> Self {
        let ids = params.trainable_ids();
        let m = ids.iter().map(|&id| vec![S::zero(); params.data(id).len()]).collect();
        let v = ids.iter().map(|&id| vec![S::zero(); params.data(id).len()]).collect();
        NadamState { step: 0, beta1: 0.9, beta2: 0.999, eta, epsilon: 1e-8, ids, m, v }
    }

    pub fn ids(&self) -> &[ParamId] {
        &self.ids
    }

    /// One update: `w <- w - eta * m_hat / (sqrt(v_hat) + eps)` with
    /// `m_hat = beta1 m_t / (1 - beta1^(t+1)) + (1 - beta1) g / (1 - beta1^t)`.
    ///
    /// Parameters without a gradient entry are left untouched (their moments
    /// do not advance either). Non-finite gradients abort with the parameter
    /// path in the message.
    pub fn apply(
        &mut self,
        params: &mut Params<S>,
        grads: &BTreeMap<ParamId, Vec<S>>,
    ) -> Result<()> {
        for (&id, g) in grads {
            if g.iter().any(|v| !v.is_finite()) {
                return Err(Error::Numerical {
                    message: format!("non-finite gradient for parameter {}", params.path(id)),
                });
            }
        }
        self.step += 1;
        let t = self.step as i32;
        let b1 = S::from_f64_c(self.beta1);
        let b2 = S::from_f64_c(self.beta2);
        let one = S::one();
        let bc1_next = one - b1.powi(t + 1);
        let bc1 = one - b1.powi(t);
        let bc2 = one - b2.powi(t);
        let eta = S::from_f64_c(self.eta);
        let eps = S::from_f64_c(self.epsilon);
        for (slot, &id) in self.ids.iter().enumerate() {
            let Some(g) = grads.get(&id) else { continue };
            let m = &mut self.m[slot];
            let v = &mut self.v[slot];
            let w = params.data_mut(id);
            for i in 0..w.len() {
                let gi = g[i];
                m[i] = b1 * m[i] + (one - b1) * gi;
                v[i] = b2 * v[i] + (one - b2) * gi * gi;
                let m_hat = b1 * m[i] / bc1_next + (one - b1) * gi / bc1;
                let v_hat = v[i] / bc2;
                w[i] = w[i] - eta * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }

    /// Serialize moments for exact resume.
    pub(crate) fn moments(&self) -> (&[Vec<S>], &[Vec<S>]) {
        (&self.m, &self.v)
    }

    pub(crate) fn restore_moments(&mut self, m: Vec<Vec<S>>, v: Vec<Vec<S>>, step: u64) {
        self.m = m;
        self.v = v;
        self.step = step;
    }
}

/// Scale gradients in place so their global L2 norm is at most `max_norm`.
pub fn clip_global_norm<S: Scalar>(grads: &mut BTreeMap<ParamId, Vec<S>>, max_norm: f64) {
    let total: f64 = grads
        .values()
        .flat_map(|g| g.iter())
        .map(|v| {
            let f = v.to_f64_c();
            f * f
        })
        .sum();
    let norm = total.sqrt();
    if norm > max_norm && norm > 0.0 {
        let scale = S::from_f64_c(max_norm / norm);
        for g in grads.values_mut() {
            g.iter_mut().for_each(|v| *v *= scale);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single_param(value: f64) -> (Params<f64>, ParamId) {
        let mut p = Params::new();
        let id = p.add("w", vec![1], vec![value], true);
        (p, id)
    }

    #[test]
    fn zero_gradient_leaves_weights_unchanged() {
        let (mut params, id) = single_param(1.0);
        let mut state = NadamState::new(&params, 0.1);
        let grads = BTreeMap::from([(id, vec![0.0])]);
        state.apply(&mut params, &grads).unwrap();
        assert_eq!(params.data(id), &[1.0]);
    }

    #[test]
    fn first_step_matches_hand_executed_recurrences() {
        // w=1, g=1, eta=0.1, beta1=0.9, beta2=0.999, eps=1e-8, t=1:
        //   m = 0.1, v = 0.001
        //   m_hat = 0.9*0.1/(1-0.9^2) + 0.1*1/(1-0.9) = 0.09/0.19 + 1
        //   v_hat = 0.001/0.001 = 1
        //   w = 1 - 0.1 * m_hat / (1 + 1e-8)
        let (mut params, id) = single_param(1.0);
        let mut state = NadamState::new(&params, 0.1);
        let grads = BTreeMap::from([(id, vec![1.0])]);
        state.apply(&mut params, &grads).unwrap();
        let m_hat = 0.09 / 0.19 + 1.0;
        let expect = 1.0 - 0.1 * m_hat / (1.0 + 1e-8);
        assert!((params.data(id)[0] - expect).abs() < 1e-12, "{} vs {expect}", params.data(id)[0]);
        // the Nesterov look-ahead makes the first step larger than eta alone
        assert!((1.0 - params.data(id)[0]) > 0.1);
    }

    #[test]
    fn constant_gradient_displacement_approaches_eta() {
        let (mut params, id) = single_param(100.0);
        let mut state = NadamState::new(&params, 0.01);
        let grads = BTreeMap::from([(id, vec![2.0])]);
        let mut prev = params.data(id)[0];
        let mut last_step = 0.0;
        for _ in 0..500 {
            state.apply(&mut params, &grads).unwrap();
            last_step = prev - params.data(id)[0];
            prev = params.data(id)[0];
        }
        assert!((last_step - 0.01).abs() < 1e-4, "per-step displacement {last_step}");
    }

    #[test]
    fn single_step_decreases_a_quadratic_bowl() {
        // f(w) = ||w||^2, gradient 2w, at the paper learning rate
        let mut params = Params::new();
        let id = params.add("w", vec![3], vec![1.0, -2.0, 3.0], true);
        let mut state = NadamState::new(&params, 1e-4);
        let g: Vec<f64> = params.data(id).iter().map(|w| 2.0 * w).collect();
        let loss_before: f64 = params.data(id).iter().map(|w| w * w).sum();
        let grads = BTreeMap::from([(id, g)]);
        state.apply(&mut params, &grads).unwrap();
        let loss_after: f64 = params.data(id).iter().map(|w| w * w).sum();
        assert!(loss_after < loss_before);
    }

    #[test]
    fn non_finite_gradient_names_the_parameter() {
        let (mut params, id) = single_param(1.0);
        let mut state = NadamState::new(&params, 0.1);
        let grads = BTreeMap::from([(id, vec![f64::NAN])]);
        let err = state.apply(&mut params, &grads).unwrap_err().to_string();
        assert!(err.contains("w"), "{err}");
    }

    #[test]
    fn clipping_caps_the_global_norm() {
        let mut params = Params::new();
        let a = params.add("a", vec![2], vec![0.0; 2], true);
        let b = params.add("b", vec![1], vec![0.0], true);
        let mut grads = BTreeMap::from([(a, vec![3.0, 4.0]), (b, vec![12.0])]);
        clip_global_norm(&mut grads, 5.0);
        let norm: f64 = grads.values().flatten().map(|v| v * v).sum::<f64>().sqrt();
        assert!((norm - 5.0).abs() < 1e-12);
    }

    #[test]
    fn state_stays_finite_over_many_steps() {
        let (mut params, id) = single_param(0.5);
        let mut state = NadamState::new(&params, 0.05);
        for i in 0..1000 {
            let g = ((i as f64) * 0.1).sin() * 10.0;
            let grads = BTreeMap::from([(id, vec![g])]);
            state.apply(&mut params, &grads).unwrap();
        }
        assert!(params.data(id)[0].is_finite());
    }
}
