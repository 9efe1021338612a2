use thiserror::Error;

/// Failure classes, each with a fixed process exit status.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid config: {0}")]
    ConfigInvalid(String),
    #[error("missing artifact: {0}")]
    MissingArtifact(String),
    #[error("data error: {0}")]
    DataError(String),
    #[error("{module}: {message}")]
    Module { module: &'static str, message: String },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::ConfigInvalid(_) => 2,
            CliError::MissingArtifact(_) => 3,
            CliError::DataError(_) => 4,
            CliError::Module { .. } => 5,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::ConfigInvalid(_) => "ConfigInvalid",
            CliError::MissingArtifact(_) => "MissingArtifact",
            CliError::DataError(_) => "DataError",
            CliError::Module { .. } => "ModuleError",
        }
    }

    /// The machine-readable form printed on stderr.
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "error": self.kind(),
            "exit_code": self.exit_code(),
            "message": self.to_string(),
        })
    }

    pub(crate) fn module(module: &'static str, e: impl std::fmt::Display) -> Self {
        CliError::Module {
            module,
            message: e.to_string(),
        }
    }
}

impl From<gradebal::dataset::DatasetError> for CliError {
    fn from(e: gradebal::dataset::DatasetError) -> Self {
        use gradebal::dataset::DatasetError as D;
        match e {
            D::Io(_)
            | D::Csv(_)
            | D::MissingHeader
            | D::BadGrade { .. }
            | D::DuplicateId { .. }
            | D::EmptyId { .. }
            | D::EmptyManifest
            | D::BadSubset { .. } => CliError::DataError(e.to_string()),
            other => CliError::module("dataset", other),
        }
    }
}

impl From<gradebal::augment::AugmentError> for CliError {
    fn from(e: gradebal::augment::AugmentError) -> Self {
        CliError::module("augment", e)
    }
}

impl From<gradebal::trainer::TrainError> for CliError {
    fn from(e: gradebal::trainer::TrainError) -> Self {
        CliError::module("trainer", e)
    }
}

impl From<gradebal::metrics::MetricsError> for CliError {
    fn from(e: gradebal::metrics::MetricsError) -> Self {
        CliError::module("metrics", e)
    }
}
