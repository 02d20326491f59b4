use std::path::PathBuf;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("config {path}: {reason}")]
    ConfigParse { path: PathBuf, reason: String },
    #[error("invalid config: {field}: {reason}")]
    Invalid { field: String, reason: String },
    #[error("missing cache for stage {stage} of measure {measure} (key {key}); rerun without --no-compute")]
    MissingCache { stage: String, measure: String, key: String },
    #[error("no reports for series {kind} under {dir}; expected files {expected}")]
    NoReports { kind: String, dir: PathBuf, expected: String },
    #[error("{context}: {message}")]
    Pipeline { context: String, message: String },
    #[error(transparent)]
    Measure(#[from] multiflat::MeasureError),
    #[error(transparent)]
    Lattice(#[from] multiflat::LatticeError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> CliError {
    let path = path.into();
    move |source| CliError::Io { path, source }
}

pub fn invalid(field: impl Into<String>, reason: impl Into<String>) -> CliError {
    CliError::Invalid { field: field.into(), reason: reason.into() }
}
