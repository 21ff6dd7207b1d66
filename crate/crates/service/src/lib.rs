//! Planning service for family weekly learning plans: model gateway,
//! generation pipeline, event store, HTTP API and the evaluation harness.

use std::io::{self, Write};
use std::path::Path;

use homeplan_core::evaluator::DetectorConfig;

pub mod api;
pub mod cli;
pub mod config;
pub mod export;
pub mod fixtures;
pub mod harness;
pub mod llm;
pub mod pipeline;
pub mod store;

/// Verbs that mark a subtask description as something the child does.
pub const CHILD_ACTIONS: &str = include_str!("../assets/child_actions.txt");

pub fn default_detectors() -> DetectorConfig {
    DetectorConfig::default().with_lexicon_text(CHILD_ACTIONS)
}

/// Writes through a temporary file in the same directory, then renames,
/// so readers never see a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> io::Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    std::fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}
