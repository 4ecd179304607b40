//! Pipeline behind the `retarget` binary: configuration, artifact files,
//! seed sweeps, reports and plots.

pub mod config;
pub mod formats;
pub mod pipeline;
pub mod plot;
pub mod report;

use std::path::{Path, PathBuf};

pub use config::{Method, PipelineConfig, Profile};
pub use pipeline::{run, Manifest, RunSummary};
pub use report::{report, Comparison};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{}:{line}: {message}", path.display())]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("missing artifact {}", .0.display())]
    MissingArtifact(PathBuf),

    #[error("{0}")]
    Mismatch(String),

    #[error(transparent)]
    Core(#[from] retarget_core::Error),
}

pub type CliResult<T> = std::result::Result<T, CliError>;

pub(crate) fn read_text(path: &Path) -> CliResult<String> {
    std::fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub(crate) fn write_text(path: &Path, text: &str) -> CliResult<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|source| CliError::Io {
            path: dir.to_path_buf(),
            source,
        })?;
    }
    std::fs::write(path, text).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub(crate) fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> CliResult<T> {
    if !path.exists() {
        return Err(CliError::MissingArtifact(path.to_path_buf()));
    }
    let text = read_text(path)?;
    serde_json::from_str(&text).map_err(|e| CliError::Parse {
        path: path.to_path_buf(),
        line: e.line(),
        message: e.to_string(),
    })
}

pub(crate) fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value).expect("artifact types serialize");
    text.push('\n');
    write_text(path, &text)
}
