//! Stratified cross-validation folds.
//!
//! Validation sets partition the real segments; synthetic segments only ever
//! appear on training sides. Subject mode keeps all windows of one subject
//! on the same side of every split.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::Segment;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CvUnit {
    Segment,
    Subject,
}

impl std::str::FromStr for CvUnit {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "segment" => Ok(CvUnit::Segment),
            "subject" => Ok(CvUnit::Subject),
            other => Err(Error::config("unit", format!("expected segment|subject, got {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FoldSplit {
    pub fold_index: usize,
    pub train_segment_ids: Vec<usize>,
    pub val_segment_ids: Vec<usize>,
    /// Fraction of each class within this fold's validation set.
    pub class_balance: Vec<f64>,
}

fn balance(ids: &[usize], segments: &[Segment], n_classes: usize) -> Vec<f64> {
    let mut counts = vec![0usize; n_classes];
    for &i in ids {
        counts[segments[i].label] += 1;
    }
    counts.iter().map(|&c| c as f64 / ids.len().max(1) as f64).collect()
}

/// Build `k` stratified folds over the real segments.
pub fn stratified_folds(
    segments: &[Segment],
    k: usize,
    unit: CvUnit,
    seed: u64,
) -> Result<Vec<FoldSplit>> {
    if k < 2 {
        return Err(Error::Split { message: format!("k must be at least 2, got {k}") });
    }
    let real_ids: Vec<usize> =
        (0..segments.len()).filter(|&i| !segments[i].is_synthetic()).collect();
    let synth_ids: Vec<usize> =
        (0..segments.len()).filter(|&i| segments[i].is_synthetic()).collect();
    let n_classes = segments.iter().map(|s| s.label + 1).max().unwrap_or(1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    // per fold, the validation ids; the cursor keeps rotating across classes
    // so per-class remainders land on different folds and sizes stay even
    let mut val_sets: Vec<Vec<usize>> = vec![Vec::new(); k];
    let mut cursor = 0usize;
    match unit {
        CvUnit::Segment => {
            let mut by_class: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
            for &i in &real_ids {
                by_class.entry(segments[i].label).or_default().push(i);
            }
            for (class, mut ids) in by_class {
                if ids.len() < k {
                    return Err(Error::Split {
                        message: format!("class {class} has {} segments; k={k} folds need at least {k}", ids.len()),
                    });
                }
                ids.shuffle(&mut rng);
                for id in ids {
                    val_sets[cursor % k].push(id);
                    cursor += 1;
                }
            }
        }
        CvUnit::Subject => {
            let mut by_subject: BTreeMap<&str, (usize, Vec<usize>)> = BTreeMap::new();
            for &i in &real_ids {
                let e = by_subject
                    .entry(segments[i].subject_id.as_str())
                    .or_insert((segments[i].label, Vec::new()));
                e.1.push(i);
            }
            let mut by_class: BTreeMap<usize, Vec<Vec<usize>>> = BTreeMap::new();
            for (_, (label, ids)) in by_subject {
                by_class.entry(label).or_default().push(ids);
            }
            for (class, mut subjects) in by_class {
                if subjects.len() < k {
                    return Err(Error::Split {
                        message: format!("class {class} has {} subjects; k={k} folds need at least {k}", subjects.len()),
                    });
                }
                subjects.shuffle(&mut rng);
                for ids in subjects {
                    val_sets[cursor % k].extend(ids);
                    cursor += 1;
                }
            }
        }
    }

    let folds = val_sets
        .into_iter()
        .enumerate()
        .map(|(fold_index, mut val)| {
            val.sort_unstable();
            let mut train: Vec<usize> = real_ids
                .iter()
                .copied()
                .filter(|i| val.binary_search(i).is_err())
                .collect();
            train.extend(synth_ids.iter().copied());
            let class_balance = balance(&val, segments, n_classes);
            FoldSplit { fold_index, train_segment_ids: train, val_segment_ids: val, class_balance }
        })
        .collect();
    Ok(folds)
}
