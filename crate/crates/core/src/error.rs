use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the closed-form electrochemical relations.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum PhysicsError {
    #[error("exponent overflow for applied voltage {voltage} V (|4EF/RT| = {exponent:.1} > 700)")]
    Range { voltage: f64, exponent: f64 },
    #[error("{quantity} must be strictly positive, got {value}")]
    Domain { quantity: &'static str, value: f64 },
    #[error("invalid geometry: {0}")]
    Geometry(String),
}

/// A single invariant violation located by its dotted config path.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct FieldError {
    pub field: String,
    pub message: String,
}

impl FieldError {
    pub fn new(field: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            field: field.into(),
            message: message.into(),
        }
    }
}

impl std::fmt::Display for FieldError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PlanError {
    #[error("voltage step must be positive, got {0}")]
    NonPositiveStep(f64),
    #[error("cannot sweep {direction} from {from} V to {to} V")]
    Direction {
        direction: &'static str,
        from: f64,
        to: f64,
    },
    #[error("span {span} V is not an integer multiple of the step {step} V")]
    NotMultiple { span: f64, step: f64 },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AnalysisError {
    #[error("branch {branch} has {found} usable points, need at least {needed}")]
    InsufficientPoints {
        branch: String,
        found: usize,
        needed: usize,
    },
    #[error("duplicate voltage {voltage} V on branch {branch}")]
    DegenerateStep { branch: String, voltage: f64 },
    #[error("only {found} points inside activity range [{lo:e}, {hi:e}], need 2")]
    InsufficientData { lo: f64, hi: f64, found: usize },
    #[error("activity range [{lo:e}, {hi:e}] is empty or reversed")]
    BadRange { lo: f64, hi: f64 },
    #[error(transparent)]
    Physics(#[from] PhysicsError),
}

#[derive(Debug, Error)]
pub enum FileError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}, line {line}: {message}")]
    Parse { path: PathBuf, line: u64, message: String },
}

impl FileError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        FileError::Io {
            path: path.into(),
            source,
        }
    }
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed config: {0}")]
    Syntax(String),
    #[error("invalid config: {}", join(.0))]
    Invalid(Vec<FieldError>),
}

fn join(errors: &[FieldError]) -> String {
    errors.iter().map(ToString::to_string).collect::<Vec<_>>().join("; ")
}

#[derive(Debug, Error)]
pub enum CampaignError {
    #[error("temperature stabilization did not converge within {limit_s} virtual seconds ({stage})")]
    StabilizationTimeout { stage: &'static str, limit_s: f64 },
    #[error(transparent)]
    Plan(#[from] PlanError),
    #[error(transparent)]
    Physics(#[from] PhysicsError),
    #[error(transparent)]
    File(#[from] FileError),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
    #[error(transparent)]
    Config(#[from] ConfigError),
}
