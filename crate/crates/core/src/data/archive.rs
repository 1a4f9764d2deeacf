//! Versioned binary segment archive plus its JSON manifest.
//!
//! Layout (little-endian):
//!   magic `IFSEG001`
//!   u32 n_segments, u32 seg_len, u32 n_channels
//!   per segment: u8 label, u8 origin, u32 parent_a, u32 parent_b
//!                (u32::MAX when absent), u16 subject-id length, utf-8 id,
//!                seg_len * n_channels f64 values (time-major)

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Origin, Segment};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"IFSEG001";
const NO_PARENT: u32 = u32::MAX;

/// Reproducibility sidecar written next to every archive.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ArchiveManifest {
    pub seed: u64,
    /// "none" or "global"; per-fold oversampling happens downstream.
    pub smote: String,
    pub k_neighbors: Option<usize>,
    pub n_records: usize,
    pub n_segments: usize,
    pub seg_len: usize,
    pub n_channels: usize,
    pub class_counts_real: Vec<usize>,
    pub class_counts_synthetic: Vec<usize>,
    /// Fraction of real segments from parkinsonian subjects.
    pub pd_fraction: f64,
    pub skipped_records: Vec<String>,
    pub skipped_rows: usize,
    pub source: String,
}

pub fn write_archive(path: &Path, segments: &[Segment], seg_len: usize, n_channels: usize) -> Result<()> {
    let mut out: Vec<u8> = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(segments.len() as u32).to_le_bytes());
    out.extend_from_slice(&(seg_len as u32).to_le_bytes());
    out.extend_from_slice(&(n_channels as u32).to_le_bytes());
    for seg in segments {
        if seg.seg_len != seg_len || seg.n_channels != n_channels {
            return Err(Error::Contract {
                message: format!(
                    "segment shape {}x{} differs from archive shape {seg_len}x{n_channels}",
                    seg.seg_len, seg.n_channels
                ),
            });
        }
        out.push(seg.label as u8);
        out.push(match seg.origin {
            Origin::Real => 0,
            Origin::Synthetic => 1,
        });
        let (pa, pb) = seg.synth_parents.map_or((NO_PARENT, NO_PARENT), |(a, b)| (a as u32, b as u32));
        out.extend_from_slice(&pa.to_le_bytes());
        out.extend_from_slice(&pb.to_le_bytes());
        let id = seg.subject_id.as_bytes();
        out.extend_from_slice(&(id.len() as u16).to_le_bytes());
        out.extend_from_slice(id);
        for v in &seg.values {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    let mut f = std::fs::File::create(path)?;
    f.write_all(&out)?;
    Ok(())
}

pub fn read_archive(path: &Path) -> Result<(Vec<Segment>, usize, usize)> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .map_err(|e| Error::format(path.to_str(), format!("cannot open archive: {e}")))?
        .read_to_end(&mut bytes)?;
    let fail = |msg: &str| Error::format(path.to_str(), msg.to_string());
    if bytes.len() < 20 || &bytes[..8] != MAGIC {
        return Err(fail("not a segment archive (bad magic)"));
    }
    let mut pos = 8usize;
    let mut read_u32 = |bytes: &[u8], pos: &mut usize| -> Result<u32> {
        if *pos + 4 > bytes.len() {
            return Err(fail("truncated archive"));
        }
        let v = u32::from_le_bytes(bytes[*pos..*pos + 4].try_into().unwrap());
        *pos += 4;
        Ok(v)
    };
    let n_segments = read_u32(&bytes, &mut pos)? as usize;
    let seg_len = read_u32(&bytes, &mut pos)? as usize;
    let n_channels = read_u32(&bytes, &mut pos)? as usize;
    let mut segments = Vec::with_capacity(n_segments);
    for _ in 0..n_segments {
        if pos + 12 > bytes.len() {
            return Err(fail("truncated segment header"));
        }
        let label = bytes[pos] as usize;
        let origin = match bytes[pos + 1] {
            0 => Origin::Real,
            1 => Origin::Synthetic,
            other => return Err(fail(&format!("bad origin byte {other}"))),
        };
        pos += 2;
        let pa = u32::from_le_bytes(bytes[pos..pos + 4].try_into().unwrap());
        let pb = u32::from_le_bytes(bytes[pos + 4..pos + 8].try_into().unwrap());
        pos += 8;
        let id_len = u16::from_le_bytes(bytes[pos..pos + 2].try_into().unwrap()) as usize;
        pos += 2;
        if pos + id_len > bytes.len() {
            return Err(fail("truncated subject id"));
        }
        let subject_id = String::from_utf8(bytes[pos..pos + id_len].to_vec())
            .map_err(|_| fail("subject id is not utf-8"))?;
        pos += id_len;
        let n_values = seg_len * n_channels;
        if pos + 8 * n_values > bytes.len() {
            return Err(fail("truncated segment values"));
        }
        let mut values = Vec::with_capacity(n_values);
        for i in 0..n_values {
            values.push(f64::from_le_bytes(bytes[pos + 8 * i..pos + 8 * i + 8].try_into().unwrap()));
        }
        pos += 8 * n_values;
        let synth_parents = if origin == Origin::Synthetic && pa != NO_PARENT {
            Some((pa as usize, pb as usize))
        } else {
            None
        };
        segments.push(Segment {
            values,
            seg_len,
            n_channels,
            label,
            subject_id,
            origin,
            synth_parents,
        });
    }
    if pos != bytes.len() {
        return Err(fail("trailing bytes after last segment"));
    }
    Ok((segments, seg_len, n_channels))
}

impl ArchiveManifest {
    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self).expect("manifest serializes");
        std::fs::write(path, json)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::format(path.to_str(), format!("cannot read manifest: {e}")))?;
        serde_json::from_str(&text)
            .map_err(|e| Error::format(path.to_str(), format!("bad manifest json: {e}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn segs() -> Vec<Segment> {
        vec![
            Segment {
                values: vec![1.5, -2.25, 0.0, 100.125],
                seg_len: 2,
                n_channels: 2,
                label: 1,
                subject_id: "GaPt07".to_string(),
                origin: Origin::Real,
                synth_parents: None,
            },
            Segment {
                values: vec![0.5, 0.25, -0.125, 3.0],
                seg_len: 2,
                n_channels: 2,
                label: 3,
                subject_id: "synthetic-3".to_string(),
                origin: Origin::Synthetic,
                synth_parents: Some((0, 17)),
            },
        ]
    }

    #[test]
    fn round_trip_preserves_everything() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("segments.ifseg");
        write_archive(&path, &segs(), 2, 2).unwrap();
        let (loaded, seg_len, n_channels) = read_archive(&path).unwrap();
        assert_eq!((seg_len, n_channels), (2, 2));
        assert_eq!(loaded.len(), 2);
        for (a, b) in loaded.iter().zip(segs()) {
            assert_eq!(a.values, b.values);
            assert_eq!(a.label, b.label);
            assert_eq!(a.subject_id, b.subject_id);
            assert_eq!(a.origin, b.origin);
            assert_eq!(a.synth_parents, b.synth_parents);
        }
    }

    #[test]
    fn identical_content_is_byte_identical() {
        let dir = tempfile::tempdir().unwrap();
        let p1 = dir.path().join("a.ifseg");
        let p2 = dir.path().join("b.ifseg");
        write_archive(&p1, &segs(), 2, 2).unwrap();
        write_archive(&p2, &segs(), 2, 2).unwrap();
        assert_eq!(std::fs::read(p1).unwrap(), std::fs::read(p2).unwrap());
    }

    #[test]
    fn bad_magic_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("junk.ifseg");
        std::fs::write(&path, b"NOTMAGIC0000000000000000").unwrap();
        assert!(read_archive(&path).is_err());
    }

    #[test]
    fn truncated_archive_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("trunc.ifseg");
        write_archive(&path, &segs(), 2, 2).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 5]).unwrap();
        assert!(read_archive(&path).is_err());
    }
}
