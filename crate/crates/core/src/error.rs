use thiserror::Error;

use crate::eval::EvalError;
use crate::extraction::ExtractionError;
use crate::gateway::GatewayError;
use crate::grounding::GroundingError;
use crate::qa::QaError;
use crate::schema::SchemaError;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Schema(#[from] SchemaError),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Extraction(#[from] ExtractionError),
    #[error(transparent)]
    Grounding(#[from] GroundingError),
    #[error(transparent)]
    Qa(#[from] QaError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}")]
    Usage(String),
}

pub type Result<T> = std::result::Result<T, Error>;

/// Error classes and their process exit codes.
pub const EXIT_CODES: &[(&str, i32)] = &[
    ("Usage", 2),
    ("SyntaxError", 10),
    ("UnknownDependency", 11),
    ("DuplicateComponent", 12),
    ("ConceptMismatch", 13),
    ("TooManyComponents", 14),
    ("DuplicateDependency", 15),
    ("InvalidSchema", 16),
    ("ExtractionFailed", 20),
    ("UnknownConcept", 21),
    ("InvalidConcept", 22),
    ("BackendUnavailable", 30),
    ("FixtureMiss", 31),
    ("MalformedReply", 32),
    ("InvalidRequest", 33),
    ("ConfigError", 34),
    ("MissingDependencyBinding", 40),
    ("MissingSchema", 41),
    ("MissingResolvedSchema", 42),
    ("ContextMismatch", 43),
    ("ResolvedSchemaInvalid", 44),
    ("ManifestInvalid", 50),
    ("MissingImage", 51),
    ("IncompletePredictions", 52),
    ("MixedMetricKinds", 53),
    ("MismatchedReports", 54),
    ("IoError", 60),
];

impl Error {
    pub fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            context: context.into(),
            source,
        }
    }

    pub fn class_name(&self) -> &'static str {
        match self {
            Error::Schema(e) => e.class_name(),
            Error::Gateway(e) => e.class_name(),
            Error::Extraction(e) => e.class_name(),
            Error::Grounding(e) => e.class_name(),
            Error::Qa(e) => e.class_name(),
            Error::Eval(e) => e.class_name(),
            Error::Io { .. } => "IoError",
            Error::Usage(_) => "Usage",
        }
    }

    pub fn exit_code(&self) -> i32 {
        let class = self.class_name();
        EXIT_CODES
            .iter()
            .find(|(c, _)| *c == class)
            .map(|(_, code)| *code)
            .unwrap_or(1)
    }
}
