//! VGRF data pipeline: parsing, segmentation, oversampling, fold
//! construction, and a synthetic generator for desk-scale verification.

pub mod archive;
pub mod folds;
pub mod parse;
pub mod segment;
pub mod smote;
pub mod synth;

pub use archive::{read_archive, write_archive, ArchiveManifest};
pub use folds::{stratified_folds, CvUnit, FoldSplit};
pub use parse::{parse_demographics, parse_vgrf, Demographics};
pub use segment::{expected_segment_count, segment};
pub use smote::{smote, smote_interpolate, OversamplePlan};
pub use synth::{synth_dataset, write_physionet_files, SynthSpec};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Sensor channels per walk in the Physionet layout.
pub const N_CHANNELS: usize = 18;
/// Window length in timesteps.
pub const SEGMENT_LEN: usize = 100;
/// Window overlap fraction.
pub const SEGMENT_OVERLAP: f64 = 0.5;
/// Severity classes: healthy plus H&Y stages 2, 2.5, 3.
pub const N_CLASSES: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Group {
    Parkinsonian,
    Control,
}

/// Hoehn & Yahr stage as present in this dataset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum HyStage {
    #[serde(rename = "0")]
    Healthy,
    #[serde(rename = "2")]
    Two,
    #[serde(rename = "2.5")]
    TwoPointFive,
    #[serde(rename = "3")]
    Three,
}

impl HyStage {
    pub fn parse(token: &str) -> Option<HyStage> {
        match token {
            "0" | "0.0" => Some(HyStage::Healthy),
            "2" | "2.0" => Some(HyStage::Two),
            "2.5" => Some(HyStage::TwoPointFive),
            "3" | "3.0" => Some(HyStage::Three),
            _ => None,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            HyStage::Healthy => "0",
            HyStage::Two => "2",
            HyStage::TwoPointFive => "2.5",
            HyStage::Three => "3",
        }
    }
}

/// Class label mapping: healthy -> 0, H&Y 2 -> 1, H&Y 2.5 -> 2, H&Y 3 -> 3.
pub fn class_label(group: Group, stage: HyStage) -> Result<usize> {
    match (group, stage) {
        (Group::Control, HyStage::Healthy) => Ok(0),
        (Group::Parkinsonian, HyStage::Two) => Ok(1),
        (Group::Parkinsonian, HyStage::TwoPointFive) => Ok(2),
        (Group::Parkinsonian, HyStage::Three) => Ok(3),
        (g, s) => Err(Error::Labeling {
            message: format!("unsupported group/stage combination: {g:?} with H&Y {}", s.as_str()),
        }),
    }
}

/// Human-readable class names for reports.
pub fn class_name(label: usize) -> String {
    match label {
        0 => "healthy".to_string(),
        1 => "severity-2".to_string(),
        2 => "severity-2.5".to_string(),
        3 => "severity-3".to_string(),
        other => format!("class-{other}"),
    }
}

/// One subject walk: aligned VGRF channels plus labeling metadata.
#[derive(Debug, Clone)]
pub struct SignalRecord {
    pub subject_id: String,
    pub group: Group,
    pub hy_stage: HyStage,
    pub label: usize,
    /// `N_CHANNELS` sequences, each `n_timesteps` long.
    pub channels: Vec<Vec<f64>>,
    pub n_timesteps: usize,
    pub source_file: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Origin {
    Real,
    Synthetic,
}

/// A fixed-length window of one walk, time-major `[seg_len, n_channels]`.
#[derive(Debug, Clone)]
pub struct Segment {
    pub values: Vec<f64>,
    pub seg_len: usize,
    pub n_channels: usize,
    pub label: usize,
    pub subject_id: String,
    pub origin: Origin,
    /// Indices of the two parents within the pool SMOTE ran on.
    pub synth_parents: Option<(usize, usize)>,
}

impl Segment {
    pub fn is_synthetic(&self) -> bool {
        self.origin == Origin::Synthetic
    }
}

/// Per-class counts over a slice of segments.
pub fn class_counts(segments: &[Segment], n_classes: usize) -> Vec<usize> {
    let mut counts = vec![0usize; n_classes];
    for s in segments {
        if s.label < n_classes {
            counts[s.label] += 1;
        }
    }
    counts
}

/// Assemble a `[B, n_channels, seg_len]` batch array from time-major segments.
pub fn segments_to_batch(segments: &[&Segment]) -> Vec<f64> {
    let mut out = Vec::new();
    for seg in segments {
        let (t_len, c_len) = (seg.seg_len, seg.n_channels);
        let mut sample = vec![0.0; t_len * c_len];
        for t in 0..t_len {
            for c in 0..c_len {
                sample[c * t_len + t] = seg.values[t * c_len + c];
            }
        }
        out.extend(sample);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn label_mapping_is_exact() {
        assert_eq!(class_label(Group::Control, HyStage::Healthy).unwrap(), 0);
        assert_eq!(class_label(Group::Parkinsonian, HyStage::Two).unwrap(), 1);
        assert_eq!(class_label(Group::Parkinsonian, HyStage::TwoPointFive).unwrap(), 2);
        assert_eq!(class_label(Group::Parkinsonian, HyStage::Three).unwrap(), 3);
        assert!(class_label(Group::Parkinsonian, HyStage::Healthy).is_err());
        assert!(class_label(Group::Control, HyStage::Two).is_err());
    }

    #[test]
    fn batch_layout_transposes_time_and_sensor() {
        let seg = Segment {
            values: vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0], // t0: [1,2], t1: [3,4], t2: [5,6]
            seg_len: 3,
            n_channels: 2,
            label: 0,
            subject_id: "s".to_string(),
            origin: Origin::Real,
            synth_parents: None,
        };
        let batch = segments_to_batch(&[&seg]);
        assert_eq!(batch, vec![1.0, 3.0, 5.0, 2.0, 4.0, 6.0]);
    }
}
