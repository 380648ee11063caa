//! Experiment driver for `genlearn`: built-in problem sequences, sweep
//! bundles, and SVG charts.

pub mod builtins;
pub mod experiment;
pub mod plot;
pub mod points;

use std::path::{Path, PathBuf};

pub use experiment::{run, ExperimentConfig, OutputBundle};
pub use plot::{render_svg, LogScale};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Solver(#[from] genlearn::Error),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    /// 2 for bad input, 3 for numerical or convergence failures, 4 for I/O.
    pub fn exit_code(&self) -> i32 {
        use genlearn::Error as E;
        match self {
            CliError::Config(_) => 2,
            CliError::Solver(E::InvalidInput(_) | E::Capability(_) | E::InvalidMethod(_)) => 2,
            CliError::Solver(_) => 3,
            CliError::Io { .. } => 4,
        }
    }

    pub fn io(path: impl AsRef<Path>, source: std::io::Error) -> Self {
        CliError::Io { path: path.as_ref().to_path_buf(), source }
    }
}

pub fn read_file(path: impl AsRef<Path>) -> Result<String, CliError> {
    std::fs::read_to_string(path.as_ref()).map_err(|e| CliError::io(path, e))
}

pub fn write_file(path: impl AsRef<Path>, contents: impl AsRef<[u8]>) -> Result<(), CliError> {
    std::fs::write(path.as_ref(), contents).map_err(|e| CliError::io(path, e))
}

/// Parses JSON, reporting the file on failure.
pub fn parse_json<T: serde::de::DeserializeOwned>(text: &str, what: &Path) -> Result<T, CliError> {
    serde_json::from_str(text).map_err(|e| CliError::Config(format!("{}: {e}", what.display())))
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<genlearn::GeneralizedDataset, CliError> {
    let path = path.as_ref();
    let ds: genlearn::GeneralizedDataset = parse_json(&read_file(path)?, path)?;
    ds.validate()?;
    Ok(ds)
}

pub fn to_json<T: serde::Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("plain data serializes");
    s.push('\n');
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes() {
        assert_eq!(CliError::Config("x".into()).exit_code(), 2);
        assert_eq!(CliError::from(genlearn::Error::Capability("x".into())).exit_code(), 2);
        assert_eq!(CliError::from(genlearn::Error::Convergence("x".into())).exit_code(), 3);
        assert_eq!(CliError::from(genlearn::Error::Numerical("x".into())).exit_code(), 3);
        let io = std::io::Error::new(std::io::ErrorKind::NotFound, "gone");
        assert_eq!(CliError::io("/nowhere", io).exit_code(), 4);
    }

    #[test]
    fn missing_dataset_is_an_io_error() {
        let e = load_dataset("/definitely/not/here.json").unwrap_err();
        assert_eq!(e.exit_code(), 4);
    }
}
