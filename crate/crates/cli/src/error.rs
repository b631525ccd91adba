use std::fmt;

use graphspot::data::DataError;
use graphspot::evaluator::EvalError;
use graphspot::numeric::NumericError;
use graphspot::plotting::PlotError;
use graphspot::spotter::SpotError;
use graphspot::synthetic::GeneratorError;
use graphspot::trainer::TrainError;

/// What went wrong, at the granularity of the process exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Usage,
    Data,
    Numeric,
}

impl ErrorKind {
    pub fn exit_code(self) -> i32 {
        match self {
            ErrorKind::Usage => 1,
            ErrorKind::Data => 2,
            ErrorKind::Numeric => 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CliError {
    pub kind: ErrorKind,
    pub message: String,
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        Self {
            kind: ErrorKind::Usage,
            message: message.into(),
        }
    }

    pub fn data(message: impl Into<String>) -> Self {
        Self {
            kind: ErrorKind::Data,
            message: message.into(),
        }
    }

    pub fn exit_code(&self) -> i32 {
        self.kind.exit_code()
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for CliError {}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::data(format!("io: {e}"))
    }
}

impl From<DataError> for CliError {
    fn from(e: DataError) -> Self {
        CliError::data(e.to_string())
    }
}

impl From<NumericError> for CliError {
    fn from(e: NumericError) -> Self {
        Self {
            kind: ErrorKind::Numeric,
            message: e.to_string(),
        }
    }
}

impl From<GeneratorError> for CliError {
    fn from(e: GeneratorError) -> Self {
        match e {
            GeneratorError::Config(_) => CliError::usage(e.to_string()),
            _ => CliError::data(e.to_string()),
        }
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        let kind = match &e {
            TrainError::Config(_) => ErrorKind::Usage,
            TrainError::EmptyDataset(_) | TrainError::Data(_) | TrainError::Io(_) => {
                ErrorKind::Data
            }
            TrainError::Encoder(_) | TrainError::Pooling(_) | TrainError::Numeric(_) => {
                ErrorKind::Numeric
            }
        };
        Self {
            kind,
            message: e.to_string(),
        }
    }
}

impl From<SpotError> for CliError {
    fn from(e: SpotError) -> Self {
        match e {
            SpotError::Train(t) => t.into(),
            SpotError::BadThreshold(_) => CliError::usage(e.to_string()),
            _ => CliError::data(e.to_string()),
        }
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        CliError::usage(e.to_string())
    }
}

impl From<PlotError> for CliError {
    fn from(e: PlotError) -> Self {
        match e {
            PlotError::Eval(e) => e.into(),
            PlotError::Spot(e) => e.into(),
            PlotError::Io(e) => e.into(),
        }
    }
}
