//! Shared command plumbing: manifests, histograms, archive access.

use inceptoformer_core::data::{class_name, read_archive, Segment};
use inceptoformer_core::error::{Error, Result};
use std::path::{Path, PathBuf};

/// Write (or rewrite) the run manifest. Called once before any computation
/// with the fully resolved configuration, and again afterwards with results.
pub fn write_manifest(out_dir: &Path, manifest: &serde_json::Value) -> Result<()> {
    std::fs::create_dir_all(out_dir)?;
    let text = serde_json::to_string_pretty(manifest).expect("manifest serializes");
    std::fs::write(out_dir.join("manifest.json"), text)?;
    Ok(())
}

/// Console histogram of per-class counts.
pub fn print_histogram(title: &str, counts: &[usize]) {
    println!("{title}");
    let max = counts.iter().copied().max().unwrap_or(1).max(1);
    for (class, &count) in counts.iter().enumerate() {
        let bar = "#".repeat((count * 50 + max - 1) / max);
        println!("  {:>12} ({count:>6}) {bar}", class_name(class));
    }
}

/// Load a segment archive, with shape information.
pub fn load_archive(path: &Path) -> Result<(Vec<Segment>, usize, usize)> {
    read_archive(path)
}

/// Sorted walk files in a directory: `*.txt` except the demographics table.
pub fn list_walk_files(dir: &Path, demographics: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Error::format(dir.to_str(), format!("cannot read directory: {e}")))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| {
            p.extension().is_some_and(|ext| ext == "txt")
                && p.file_name() != demographics.file_name()
        })
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(Error::format(dir.to_str(), "no .txt walk files found"));
    }
    Ok(files)
}

/// Default data directory from the environment when no flag is given.
pub fn data_dir_from(flag: Option<PathBuf>) -> Result<PathBuf> {
    if let Some(dir) = flag {
        return Ok(dir);
    }
    std::env::var_os("INCEPTOFORMER_DATA_DIR").map(PathBuf::from).ok_or_else(|| {
        Error::config("data_dir", "pass --data-dir or set INCEPTOFORMER_DATA_DIR")
    })
}
