//! Library behind the `kfpls` command: configuration, the case-study
//! pipeline, sweeps and file outputs.

pub mod commands;
pub mod config;
pub mod output;
pub mod pipeline;

use thiserror::Error;

/// Failures grouped by the category printed on exit.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Numeric(String),
    #[error("{0}")]
    Io(String),
}

impl CliError {
    pub fn category(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "usage",
            CliError::Config(_) => "config",
            CliError::Data(_) => "data",
            CliError::Numeric(_) => "numeric",
            CliError::Io(_) => "io",
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            _ => 1,
        }
    }
}

impl From<kfpls::Error> for CliError {
    fn from(e: kfpls::Error) -> Self {
        use kfpls::Error as E;
        let msg = e.to_string();
        match e {
            E::Io(_) => CliError::Io(msg),
            E::InvalidArgument(_) => CliError::Config(msg),
            E::Csv { .. }
            | E::EmptyData(_)
            | E::ZeroVariance(_)
            | E::Format(_)
            | E::DimensionMismatch(_)
            | E::NonFinite(_) => CliError::Data(msg),
            E::RankExhausted | E::IllConditioned(_) | E::DegenerateKernel(_) | E::TooManySkipped { .. } => {
                CliError::Numeric(msg)
            }
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
