//! Dataset construction on disk.

use std::path::Path;

use super::spec::DataPaths;
use crate::corpus::{load_paragraphs, write_records};
use crate::error::{Error, Result};
use crate::synth::{generate, SynthConfig};
use crate::taskgen::{build_proxy_sets, BuildSummary};

/// Reads a paragraph corpus and writes `sro.jsonl`, `isr.jsonl` and
/// `build_summary.json` into `out_dir`.
pub fn build_datasets(paragraphs: impl AsRef<Path>, out_dir: impl AsRef<Path>, seed: u64) -> Result<BuildSummary> {
    let out = out_dir.as_ref();
    let paragraphs = load_paragraphs(paragraphs)?;
    let (sro, isr, summary) = build_proxy_sets(&paragraphs, seed);
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    write_records(out.join("sro.jsonl"), &sro)?;
    write_records(out.join("isr.jsonl"), &isr)?;
    let path = out.join("build_summary.json");
    let mut text = serde_json::to_string_pretty(&summary)?;
    text.push('\n');
    std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    Ok(summary)
}

/// Generates the synthetic corpus into `dir`, derives SRO/ISR from its
/// stories and returns the paths of every dataset.
pub fn synth_workspace(config: &SynthConfig, dir: impl AsRef<Path>) -> Result<DataPaths> {
    let dir = dir.as_ref();
    let files = generate(config)?.write(dir)?;
    build_datasets(&files.paragraphs, dir, config.seed)?;
    Ok(DataPaths::in_directory(dir))
}
