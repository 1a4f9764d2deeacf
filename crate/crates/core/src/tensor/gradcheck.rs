//! Central finite-difference gradient checking.
//!
//! This is the independence oracle for every differentiable op and layer:
//! it never consults the backward closures it is checking, only repeated
//! forward evaluations under parameter perturbation.

use super::{Tape, Tensor};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Worst-offender detail inside a gradient check.
#[derive(Debug, Clone)]
pub struct WorstEntry {
    pub param: usize,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
}

/// Outcome of comparing analytic gradients against central differences.
#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub pass: bool,
    pub n_checked: usize,
    pub worst: Option<WorstEntry>,
}

/// Relative error with an absolute floor so near-zero pairs compare sanely.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

/// Check analytic gradients of a scalar-valued graph builder against
/// central finite differences.
///
/// `f` must rebuild the graph from scratch on the given tape, bind each
/// entry of `theta` as a leaf, and return the scalar loss together with the
/// leaf handles in `theta` order. Determinism of `f` given `theta` is the
/// caller's responsibility (no dropout, no running-stat updates).
pub fn gradcheck<S, F>(theta: &mut [Vec<S>], mut f: F, eps: f64, tol: f64) -> Result<GradCheckReport>
where
    S: Scalar,
    F: FnMut(&Tape<S>, &[Vec<S>]) -> Result<(Tensor<S>, Vec<Tensor<S>>)>,
{
    if eps <= 0.0 {
        return Err(Error::config("eps", format!("must be positive, got {eps}")));
    }
    let analytic: Vec<Vec<S>> = {
        let tape = Tape::new();
        let (loss, leaves) = f(&tape, theta)?;
        if leaves.len() != theta.len() {
            return Err(Error::Contract {
                message: format!(
                    "gradcheck closure returned {} leaves for {} parameter arrays",
                    leaves.len(),
                    theta.len()
                ),
            });
        }
        if !loss.all_finite() {
            return Err(Error::Numerical { message: "non-finite loss in analytic pass".to_string() });
        }
        loss.backward()?;
        leaves.iter().map(Tensor::grad_or_zeros).collect()
    };

    let mut eval = |theta: &[Vec<S>]| -> Result<f64> {
        let tape = Tape::new();
        let (loss, _) = f(&tape, theta)?;
        Ok(loss.item().to_f64_c())
    };

    let step = S::from_f64_c(eps);
    let mut max_rel = 0.0f64;
    let mut worst = None;
    let mut n_checked = 0usize;
    for pi in 0..theta.len() {
        for j in 0..theta[pi].len() {
            let orig = theta[pi][j];
            theta[pi][j] = orig + step;
            let lp = eval(theta)?;
            theta[pi][j] = orig - step;
            let lm = eval(theta)?;
            theta[pi][j] = orig;
            let numeric = (lp - lm) / (2.0 * eps);
            let a = analytic[pi][j].to_f64_c();
            if !numeric.is_finite() || !a.is_finite() {
                return Err(Error::Numerical {
                    message: format!("non-finite gradient at parameter {pi}[{j}]: analytic {a}, numeric {numeric}"),
                });
            }
            let rel = relative_error(a, numeric);
            n_checked += 1;
            if rel > max_rel {
                max_rel = rel;
                worst = Some(WorstEntry { param: pi, index: j, analytic: a, numeric });
            }
        }
    }
    Ok(GradCheckReport { max_rel_error: max_rel, pass: max_rel < tol, n_checked, worst })
}
