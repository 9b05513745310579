use std::path::PathBuf;
use std::process::ExitCode;

use rul_core::data::DataError;
use rul_core::genetic::GaError;
use rul_core::model::ModelError;
use rul_core::nn::NnError;
use rul_core::report::ReportError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("{0}")]
    Domain(String),
    #[error("numeric failure: {0}")]
    Numeric(String),
}

impl CliError {
    pub fn exit_code(&self) -> ExitCode {
        ExitCode::from(match self {
            CliError::Io { .. } | CliError::Parse { .. } => 2,
            CliError::Domain(_) => 3,
            CliError::Numeric(_) => 4,
        })
    }

    pub fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> Self {
        let path = path.into();
        move |source| CliError::Io { path, source }
    }

    /// Attaches the file a data error came from.
    pub fn data(path: impl Into<PathBuf>) -> impl FnOnce(DataError) -> Self {
        let path = path.into();
        move |e| match e {
            DataError::InvalidDenominator(_) | DataError::InvalidWindow | DataError::InvalidFraction(_) => {
                CliError::Domain(e.to_string())
            }
            _ => CliError::Parse {
                path,
                message: e.to_string(),
            },
        }
    }
}

impl From<NnError> for CliError {
    fn from(e: NnError) -> Self {
        match e {
            NnError::ShapeMismatch { .. } => CliError::Domain(e.to_string()),
            _ => CliError::Numeric(e.to_string()),
        }
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::Nn(nn) => nn.into(),
            ModelError::Io(source) => CliError::Io {
                path: PathBuf::from("model file"),
                source,
            },
            ModelError::Format(_) => CliError::Parse {
                path: PathBuf::from("model file"),
                message: e.to_string(),
            },
            ModelError::InvalidSpec(_) | ModelError::EmptyDataset | ModelError::DatasetShape { .. } => {
                CliError::Domain(e.to_string())
            }
        }
    }
}

impl From<GaError> for CliError {
    fn from(e: GaError) -> Self {
        match e {
            GaError::Model(m) => m.into(),
            _ => CliError::Domain(e.to_string()),
        }
    }
}

impl From<ReportError> for CliError {
    fn from(e: ReportError) -> Self {
        match e {
            ReportError::Model(m) => m.into(),
            ReportError::Io(source) => CliError::Io {
                path: PathBuf::from("report"),
                source,
            },
            ReportError::Csv(_) | ReportError::Parse(_) => CliError::Parse {
                path: PathBuf::from("report"),
                message: e.to_string(),
            },
            ReportError::Data(d) => CliError::Domain(d.to_string()),
            ReportError::Empty(_) | ReportError::DuplicateLabel(_) | ReportError::EngineTooShort { .. } => {
                CliError::Domain(e.to_string())
            }
        }
    }
}
