//! Fixed-length overlapping windows over a walk.

use super::{Origin, Segment, SignalRecord};
use crate::error::{Error, Result};

/// Number of windows a walk of `n_timesteps` yields.
pub fn expected_segment_count(n_timesteps: usize, length: usize, stride: usize) -> usize {
    if n_timesteps < length {
        0
    } else {
        (n_timesteps - length) / stride + 1
    }
}

/// Split a record into `length`-step windows with the given overlap.
/// Walks shorter than one window yield an empty list.
pub fn segment(record: &SignalRecord, length: usize, overlap: f64) -> Result<Vec<Segment>> {
    if length == 0 {
        return Err(Error::config("length", "must be at least 1"));
    }
    if !(0.0..1.0).contains(&overlap) {
        return Err(Error::config("overlap", format!("must be in [0,1), got {overlap}")));
    }
    let stride = (length as f64 * (1.0 - overlap)).round() as usize;
    if stride == 0 {
        return Err(Error::config("overlap", format!("stride rounds to zero at overlap {overlap}")));
    }
    let n_channels = record.channels.len();
    let count = expected_segment_count(record.n_timesteps, length, stride);
    let mut out = Vec::with_capacity(count);
    for w in 0..count {
        let start = w * stride;
        let mut values = Vec::with_capacity(length * n_channels);
        for t in 0..length {
            for ch in &record.channels {
                values.push(ch[start + t]);
            }
        }
        out.push(Segment {
            values,
            seg_len: length,
            n_channels,
            label: record.label,
            subject_id: record.subject_id.clone(),
            origin: Origin::Real,
            synth_parents: None,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{Group, HyStage};

    fn record(n: usize) -> SignalRecord {
        SignalRecord {
            subject_id: "s1".to_string(),
            group: Group::Control,
            hy_stage: HyStage::Healthy,
            label: 0,
            channels: (0..18).map(|c| (0..n).map(|t| (c * n + t) as f64).collect()).collect(),
            n_timesteps: n,
            source_file: "mem".to_string(),
        }
    }

    #[test]
    fn canonical_counts() {
        assert_eq!(segment(&record(3000), 100, 0.5).unwrap().len(), 59);
        assert_eq!(segment(&record(100), 100, 0.5).unwrap().len(), 1);
        assert_eq!(segment(&record(99), 100, 0.5).unwrap().len(), 0);
    }

    #[test]
    fn count_matches_closed_form_over_sweep() {
        for n in (100..=5000).step_by(37) {
            let got = segment(&record(n), 100, 0.5).unwrap().len();
            assert_eq!(got, (n - 100) / 50 + 1, "n={n}");
        }
    }

    #[test]
    fn windows_start_at_stride_multiples_and_inherit_label() {
        let rec = record(200);
        let segs = segment(&rec, 100, 0.5).unwrap();
        assert_eq!(segs.len(), 3);
        for (w, seg) in segs.iter().enumerate() {
            assert_eq!(seg.label, 0);
            assert_eq!(seg.subject_id, "s1");
            assert_eq!(seg.seg_len, 100);
            assert_eq!(seg.n_channels, 18);
            // first element of window w is channel 0 at t = 50w
            assert_eq!(seg.values[0], (50 * w) as f64);
        }
    }

    #[test]
    fn degenerate_overlap_is_rejected() {
        assert!(segment(&record(500), 100, 0.999).is_err());
        assert!(segment(&record(500), 100, 1.0).is_err());
        assert!(segment(&record(500), 100, -0.1).is_err());
    }
}
