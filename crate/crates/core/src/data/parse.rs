//! Physionet-format VGRF walk files and the demographics table.
//!
//! Walk files: whitespace-separated numeric columns, one row per 10 ms
//! sample; column 1 is time in seconds, columns 2-19 the 18 VGRF channels.
//! Demographics: one `subject_id group hy_stage` line per subject, `#`
//! comments allowed. The subject id of a walk file is its stem up to the
//! last underscore (`GaPt03_01.txt` -> `GaPt03`).

use std::collections::BTreeMap;
use std::path::Path;

use super::{class_label, Group, HyStage, SignalRecord, N_CHANNELS};
use crate::error::{Error, Result};

pub struct Demographics {
    map: BTreeMap<String, (Group, HyStage)>,
}

impl Demographics {
    pub fn lookup(&self, subject_id: &str) -> Option<(Group, HyStage)> {
        self.map.get(subject_id).copied()
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }
}

fn parse_group(token: &str) -> Option<Group> {
    match token.to_ascii_lowercase().as_str() {
        "parkinsonian" | "pd" | "pt" | "patient" => Some(Group::Parkinsonian),
        "control" | "co" | "healthy" => Some(Group::Control),
        _ => None,
    }
}

pub fn parse_demographics(path: &Path) -> Result<Demographics> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::format(path.to_str(), format!("cannot read demographics: {e}")))?;
    let mut map = BTreeMap::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut tok = line.split_whitespace();
        let (id, group_tok, stage_tok) = match (tok.next(), tok.next(), tok.next()) {
            (Some(a), Some(b), Some(c)) => (a, b, c),
            _ => {
                return Err(Error::format(
                    path.to_str(),
                    format!("line {}: expected `subject_id group hy_stage`", lineno + 1),
                ))
            }
        };
        let group = parse_group(group_tok).ok_or_else(|| {
            Error::format(path.to_str(), format!("line {}: unknown group {group_tok:?}", lineno + 1))
        })?;
        let stage = HyStage::parse(stage_tok).ok_or_else(|| {
            Error::format(
                path.to_str(),
                format!("line {}: H&Y stage must be one of 0, 2, 2.5, 3; got {stage_tok:?}", lineno + 1),
            )
        })?;
        if map.insert(id.to_string(), (group, stage)).is_some() {
            return Err(Error::format(path.to_str(), format!("duplicate subject {id:?}")));
        }
    }
    Ok(Demographics { map })
}

/// Subject id of a walk file: stem up to the last underscore.
pub fn subject_id_of(path: &Path) -> String {
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or_default();
    match stem.rfind('_') {
        Some(pos) => stem[..pos].to_string(),
        None => stem.to_string(),
    }
}

/// Parse one walk file. Returns the record plus the number of rows skipped
/// for non-numeric entries.
pub fn parse_vgrf(file: &Path, demographics: &Demographics) -> Result<(SignalRecord, usize)> {
    let subject_id = subject_id_of(file);
    let (group, stage) = demographics.lookup(&subject_id).ok_or_else(|| Error::Labeling {
        message: format!("subject {subject_id:?} (from {}) missing in demographics", file.display()),
    })?;
    let label = class_label(group, stage)?;
    let text = std::fs::read_to_string(file)
        .map_err(|e| Error::format(file.to_str(), format!("cannot read: {e}")))?;
    let mut channels: Vec<Vec<f64>> = vec![Vec::new(); N_CHANNELS];
    let mut skipped = 0usize;
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split_whitespace().collect();
        if cols.len() != N_CHANNELS + 1 {
            return Err(Error::format(
                file.to_str(),
                format!("expected 19 columns (time + 18 signals), got {}", cols.len()),
            ));
        }
        match cols.iter().map(|c| c.parse::<f64>()).collect::<std::result::Result<Vec<f64>, _>>() {
            Ok(values) => {
                for (ch, &v) in channels.iter_mut().zip(&values[1..]) {
                    ch.push(v);
                }
            }
            Err(_) => skipped += 1,
        }
    }
    let n_timesteps = channels[0].len();
    if n_timesteps == 0 {
        return Err(Error::format(file.to_str(), "no numeric rows"));
    }
    Ok((
        SignalRecord {
            subject_id,
            group,
            hy_stage: stage,
            label,
            channels,
            n_timesteps,
            source_file: file.display().to_string(),
        },
        skipped,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_demo(dir: &Path) -> std::path::PathBuf {
        let p = dir.join("demographics.txt");
        let mut f = std::fs::File::create(&p).unwrap();
        writeln!(f, "# subject_id group hy_stage").unwrap();
        writeln!(f, "SubA control 0").unwrap();
        writeln!(f, "SubB parkinsonian 2.5").unwrap();
        p
    }

    #[test]
    fn constructed_fixture_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let demo = parse_demographics(&write_demo(dir.path())).unwrap();
        let walk = dir.path().join("SubA_01.txt");
        let mut f = std::fs::File::create(&walk).unwrap();
        for t in 0..3 {
            let row: Vec<String> =
                std::iter::once(format!("{:.2}", t as f64 * 0.01)).chain((0..18).map(|_| "100.0".to_string())).collect();
            writeln!(f, "{}", row.join(" ")).unwrap();
        }
        let (rec, skipped) = parse_vgrf(&walk, &demo).unwrap();
        assert_eq!(rec.n_timesteps, 3);
        assert_eq!(rec.label, 0);
        assert_eq!(skipped, 0);
        assert!(rec.channels.iter().all(|c| c == &vec![100.0, 100.0, 100.0]));
    }

    #[test]
    fn wrong_column_count_names_expected_19() {
        let dir = tempfile::tempdir().unwrap();
        let demo = parse_demographics(&write_demo(dir.path())).unwrap();
        let walk = dir.path().join("SubA_02.txt");
        std::fs::write(&walk, "0.0 1 2 3 4 5 6 7 8 9 10 11\n").unwrap();
        let err = parse_vgrf(&walk, &demo).unwrap_err().to_string();
        assert!(err.contains("19"), "{err}");
    }

    #[test]
    fn stage_two_point_five_maps_to_class_two() {
        let dir = tempfile::tempdir().unwrap();
        let demo = parse_demographics(&write_demo(dir.path())).unwrap();
        let walk = dir.path().join("SubB_01.txt");
        let row: Vec<String> = std::iter::once("0.00".to_string()).chain((0..18).map(|i| format!("{i}.5"))).collect();
        std::fs::write(&walk, format!("{}\n", row.join("\t"))).unwrap();
        let (rec, _) = parse_vgrf(&walk, &demo).unwrap();
        assert_eq!(rec.label, 2);
    }

    #[test]
    fn non_numeric_rows_are_skipped() {
        let dir = tempfile::tempdir().unwrap();
        let demo = parse_demographics(&write_demo(dir.path())).unwrap();
        let walk = dir.path().join("SubA_03.txt");
        let good: Vec<String> = std::iter::once("0.00".to_string()).chain((0..18).map(|_| "5.0".into())).collect();
        let bad: Vec<String> = std::iter::once("0.01".to_string()).chain((0..18).map(|_| "oops".into())).collect();
        std::fs::write(&walk, format!("{}\n{}\n", good.join(" "), bad.join(" "))).unwrap();
        let (rec, skipped) = parse_vgrf(&walk, &demo).unwrap();
        assert_eq!(rec.n_timesteps, 1);
        assert_eq!(skipped, 1);
    }

    #[test]
    fn empty_file_is_a_format_error() {
        let dir = tempfile::tempdir().unwrap();
        let demo = parse_demographics(&write_demo(dir.path())).unwrap();
        let walk = dir.path().join("SubA_04.txt");
        std::fs::write(&walk, "").unwrap();
        assert!(matches!(parse_vgrf(&walk, &demo), Err(Error::Format { .. })));
    }

    #[test]
    fn unknown_subject_is_a_labeling_error() {
        let dir = tempfile::tempdir().unwrap();
        let demo = parse_demographics(&write_demo(dir.path())).unwrap();
        let walk = dir.path().join("Ghost_01.txt");
        std::fs::write(&walk, "0.0 1 2 3 4 5 6 7 8 9 10 11 12 13 14 15 16 17 18\n").unwrap();
        assert!(matches!(parse_vgrf(&walk, &demo), Err(Error::Labeling { .. })));
    }
}
