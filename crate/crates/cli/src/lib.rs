//! Config-driven runs of the `modelavg` pipeline: load or synthesize data,
//! sweep candidates over models and fit ranges, score, average and write
//! tables.

pub mod config;
pub mod output;
pub mod run;

pub use config::RunConfig;
pub use output::{emit_table, format_sig6, write_manifest, Manifest};
pub use run::{run, RunResult};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: std::path::PathBuf,
        source: std::io::Error,
    },

    #[error(transparent)]
    Model(modelavg::Error),

    #[error("no candidate produced a result; nothing to write")]
    EmptyResults,
}

impl From<modelavg::Error> for CliError {
    fn from(e: modelavg::Error) -> Self {
        match e {
            modelavg::Error::Config(msg) => Self::Config(msg),
            other => Self::Model(other),
        }
    }
}

impl CliError {
    pub fn io(path: impl Into<std::path::PathBuf>, source: std::io::Error) -> Self {
        Self::Io { path: path.into(), source }
    }

    /// Process exit status: 2 for configuration problems, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) => 2,
            _ => 1,
        }
    }
}
