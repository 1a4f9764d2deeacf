//! Synthetic minority oversampling.
//!
//! Minority classes (healthy and the most severe stage) are raised to the
//! majority count by interpolating between a sample and one of its k nearest
//! same-class neighbors; the middle classes stay untouched. Neighbor search
//! runs in per-channel z-scored space so high-force sensors do not dominate
//! the metric, while interpolation happens on raw values so every synthetic
//! sample lies component-wise between its parents.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{class_counts, Origin, Segment};
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct OversamplePlan {
    pub class_counts: Vec<usize>,
    pub majority_class: usize,
    /// Synthetic samples to generate per class.
    pub n_new: Vec<usize>,
    pub k_neighbors: usize,
}

impl OversamplePlan {
    /// Raise the first and last class to the majority count; classes in
    /// between keep their counts.
    pub fn new(segments: &[Segment], n_classes: usize, k_neighbors: usize) -> Self {
        let counts = class_counts(segments, n_classes);
        let majority_class =
            (0..n_classes).max_by_key(|&c| (counts[c], std::cmp::Reverse(c))).unwrap_or(0);
        let majority = counts[majority_class];
        let minority = [0, n_classes - 1];
        let n_new = (0..n_classes)
            .map(|c| if minority.contains(&c) { majority.saturating_sub(counts[c]) } else { 0 })
            .collect();
        OversamplePlan { class_counts: counts, majority_class, n_new, k_neighbors }
    }

    pub fn total_new(&self) -> usize {
        self.n_new.iter().sum()
    }
}

/// Linear interpolation between two flattened segments.
pub fn smote_interpolate(a: &[f64], b: &[f64], lambda: f64) -> Vec<f64> {
    a.iter().zip(b).map(|(&x, &y)| x + lambda * (y - x)).collect()
}

/// Per-channel z-scored copies of the given segments for distance search.
fn zscored(segments: &[Segment], ids: &[usize]) -> Vec<Vec<f64>> {
    let n_channels = segments[ids[0]].n_channels;
    let seg_len = segments[ids[0]].seg_len;
    let n = ids.len() * seg_len;
    let mut mean = vec![0.0f64; n_channels];
    let mut var = vec![0.0f64; n_channels];
    for &i in ids {
        for t in 0..seg_len {
            for c in 0..n_channels {
                mean[c] += segments[i].values[t * n_channels + c];
            }
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    for &i in ids {
        for t in 0..seg_len {
            for c in 0..n_channels {
                let d = segments[i].values[t * n_channels + c] - mean[c];
                var[c] += d * d;
            }
        }
    }
    let std: Vec<f64> = var.iter().map(|v| (v / n as f64).sqrt().max(1e-12)).collect();
    ids.iter()
        .map(|&i| {
            segments[i]
                .values
                .iter()
                .enumerate()
                .map(|(j, &v)| (v - mean[j % n_channels]) / std[j % n_channels])
                .collect()
        })
        .collect()
}

/// Indices (within `ids`) of each member's k nearest same-class neighbors.
fn knn_table(z: &[Vec<f64>], k: usize) -> Vec<Vec<usize>> {
    (0..z.len())
        .into_par_iter()
        .map(|i| {
            let mut dist: Vec<(f64, usize)> = (0..z.len())
                .filter(|&j| j != i)
                .map(|j| {
                    let d: f64 = z[i].iter().zip(&z[j]).map(|(a, b)| (a - b) * (a - b)).sum();
                    (d, j)
                })
                .collect();
            dist.sort_by(|a, b| a.partial_cmp(b).expect("finite distances"));
            dist.into_iter().take(k).map(|(_, j)| j).collect()
        })
        .collect()
}

/// Oversample per the plan. Returns the input segments followed by the
/// generated synthetic ones; parent indices refer to the input order.
pub fn smote(segments: &[Segment], plan: &OversamplePlan, seed: u64) -> Result<Vec<Segment>> {
    let n_classes = plan.n_new.len();
    let mut out: Vec<Segment> = segments.to_vec();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for class in 0..n_classes {
        let need = plan.n_new[class];
        if need == 0 {
            continue;
        }
        let ids: Vec<usize> =
            (0..segments.len()).filter(|&i| segments[i].label == class).collect();
        if ids.len() < 2 {
            return Err(Error::Oversample {
                message: format!("class {class} has {} samples; need at least 2", ids.len()),
            });
        }
        if plan.k_neighbors == 0 || plan.k_neighbors >= ids.len() {
            return Err(Error::config(
                "k_neighbors",
                format!("{} must be in [1, {}) for class {class}", plan.k_neighbors, ids.len()),
            ));
        }
        let z = zscored(segments, &ids);
        let neighbors = knn_table(&z, plan.k_neighbors);
        for _ in 0..need {
            let a = rng.gen_range(0..ids.len());
            let b = neighbors[a][rng.gen_range(0..plan.k_neighbors)];
            let lambda: f64 = rng.gen();
            let (pi, pj) = (ids[a], ids[b]);
            out.push(Segment {
                values: smote_interpolate(&segments[pi].values, &segments[pj].values, lambda),
                seg_len: segments[pi].seg_len,
                n_channels: segments[pi].n_channels,
                label: class,
                subject_id: format!("synthetic-{class}"),
                origin: Origin::Synthetic,
                synth_parents: Some((pi, pj)),
            });
        }
    }
    Ok(out)
}
