//! Experiment orchestration for the auction arena: scenario presets, seeded
//! runs that stream per-step metrics, aggregation into summary tables, SVG
//! charts and the game-theory verification entry point.

pub mod aggregate;
pub mod plot;
pub mod run;
pub mod scenario;
pub mod verify;

use std::path::{Path, PathBuf};

use thiserror::Error;

pub use aggregate::{aggregate, Series, Summary};
pub use plot::emit_plots;
pub use run::{run_scenario, Manifest, MetricsRow, RunOutput};
pub use scenario::{preset, Scenario};
pub use verify::{verify_appendix, VerifyReport};

/// Relative output paths resolve under this directory when it is set.
pub const OUTPUT_ROOT_ENV: &str = "ARENA_OUTPUT_ROOT";

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("unknown preset `{0}`")]
    UnknownPreset(String),
    #[error("invalid scenario: {0}")]
    Scenario(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{}:{line}: {message}", path.display())]
    Parse { path: PathBuf, line: usize, message: String },
    #[error("empty run: {0}")]
    EmptyRun(String),
    #[error("bad metrics: {0}")]
    Rows(String),
    #[error("episode {episode} aborted: {message}")]
    Episode { episode: usize, message: String },
    #[error("plot: {0}")]
    Plot(String),
}

impl HarnessError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        HarnessError::Io { path: path.to_path_buf(), source }
    }
}

/// `path` itself when absolute or when no output root is configured.
pub fn output_path(path: &Path) -> PathBuf {
    match std::env::var_os(OUTPUT_ROOT_ENV) {
        Some(root) if path.is_relative() && !root.is_empty() => Path::new(&root).join(path),
        _ => path.to_path_buf(),
    }
}
