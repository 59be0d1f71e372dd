use solartformer::autodiff::TensorError;
use solartformer::container::ContainerError;
use solartformer::data::DataError;
use solartformer::metrics::MetricsError;
use solartformer::model::ModelError;
use solartformer::train::TrainError;
use std::fmt;

/// A failed command, classified by exit status.
#[derive(Debug)]
pub enum CliError {
    Config(String),
    Data(String),
    Numeric(String),
    Invariant(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) => 1,
            Self::Data(_) => 2,
            Self::Numeric(_) => 3,
            Self::Invariant(_) => 4,
        }
    }

    pub fn io(path: &std::path::Path, e: std::io::Error) -> Self {
        Self::Data(format!("{}: {e}", path.display()))
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (kind, msg) = match self {
            Self::Config(m) => ("config error", m),
            Self::Data(m) => ("data error", m),
            Self::Numeric(m) => ("numeric failure", m),
            Self::Invariant(m) => ("internal error", m),
        };
        write!(f, "{kind}: {msg}")
    }
}

impl std::error::Error for CliError {}

impl From<DataError> for CliError {
    fn from(e: DataError) -> Self {
        match e {
            DataError::Config(_) => Self::Config(e.to_string()),
            _ => Self::Data(e.to_string()),
        }
    }
}

impl From<ContainerError> for CliError {
    fn from(e: ContainerError) -> Self {
        Self::Data(e.to_string())
    }
}

impl From<TensorError> for CliError {
    fn from(e: TensorError) -> Self {
        match e {
            TensorError::NonFinite { .. } => Self::Numeric(e.to_string()),
            _ => Self::Invariant(e.to_string()),
        }
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::Config(_) => Self::Config(e.to_string()),
            ModelError::Tensor(t) => t.into(),
            ModelError::InputShape { .. }
            | ModelError::ParamMismatch(_)
            | ModelError::Checkpoint(_)
            | ModelError::Container(_) => Self::Data(e.to_string()),
        }
    }
}

impl From<MetricsError> for CliError {
    fn from(e: MetricsError) -> Self {
        match e {
            MetricsError::Config(_) => Self::Config(e.to_string()),
            MetricsError::NonFinite => Self::Numeric(e.to_string()),
            MetricsError::Model(m) => m.into(),
            MetricsError::UndefinedPercentageError | MetricsError::TooShort { .. } => Self::Data(e.to_string()),
            MetricsError::LengthMismatch(..) => Self::Invariant(e.to_string()),
        }
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        if e.is_numeric() {
            return Self::Numeric(e.to_string());
        }
        match e {
            TrainError::Config(_) => Self::Config(e.to_string()),
            TrainError::Empty(_) => Self::Data(e.to_string()),
            TrainError::Model(m) => m.into(),
            TrainError::Tensor(t) => t.into(),
            TrainError::Metrics(m) => m.into(),
            TrainError::Data(d) => d.into(),
            TrainError::NonFiniteGradient { .. } | TrainError::NonFiniteLoss { .. } => Self::Numeric(e.to_string()),
        }
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        Self::Data(format!("json: {e}"))
    }
}

pub type CliResult<T> = Result<T, CliError>;
