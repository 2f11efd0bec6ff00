use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("quadrature did not converge: {detail}")]
    QuadratureFailure { detail: String },

    #[error("hypothesis `{invariant}` violated: {detail}")]
    HypothesisViolation { invariant: String, detail: String },

    #[error("parse error: {detail}")]
    Parse { detail: String },

    #[error("Gram matrix not positive definite at {precision_bits} bits (pivot {pivot})")]
    NotPositiveDefinite { precision_bits: u32, pivot: usize },

    #[error(
        "moment residual {residual:e} exceeds tolerance {tolerance:e} at {precision_bits} bits; \
         reduce the number of modes or adjust the horizon"
    )]
    ResidualTooLarge {
        residual: f64,
        tolerance: f64,
        precision_bits: u32,
    },

    #[error("argument out of range: {detail}")]
    OutOfRange { detail: String },

    #[error("integrator tolerance unreachable at t = {t:e} (step {step:e})")]
    ToleranceUnreachable { t: f64, step: f64 },

    #[error("admissibility gate violated before stage {stage}: {value:e} > {limit:e}")]
    AdmissibilityViolated { stage: usize, value: f64, limit: f64 },

    #[error("contraction failure at stage {stage}: {current:e} >= {previous:e}")]
    ContractionFailure {
        stage: usize,
        previous: f64,
        current: f64,
    },

    #[error("strip condition violated: {detail}")]
    StripViolated { detail: String },

    #[error("cone condition violated: {detail}")]
    ConeViolated { detail: String },

    #[error("degenerate norm sequence: {detail}")]
    DegenerateSequence { detail: String },

    #[error("invalid configuration: {detail}")]
    Config { detail: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Coarse failure classes, used to pick process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FailureClass {
    Config,
    Control,
    Numerical,
    Io,
}

impl Error {
    pub fn class(&self) -> FailureClass {
        match self {
            Error::Config { .. } | Error::Parse { .. } | Error::HypothesisViolation { .. } => {
                FailureClass::Config
            }
            Error::AdmissibilityViolated { .. }
            | Error::ContractionFailure { .. }
            | Error::StripViolated { .. }
            | Error::ConeViolated { .. } => FailureClass::Control,
            Error::Io(_) => FailureClass::Io,
            _ => FailureClass::Numerical,
        }
    }

    /// Stable machine-readable name of the variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::QuadratureFailure { .. } => "QuadratureFailure",
            Error::HypothesisViolation { .. } => "HypothesisViolation",
            Error::Parse { .. } => "ParseError",
            Error::NotPositiveDefinite { .. } => "NotPositiveDefinite",
            Error::ResidualTooLarge { .. } => "ResidualTooLarge",
            Error::OutOfRange { .. } => "OutOfRange",
            Error::ToleranceUnreachable { .. } => "ToleranceUnreachable",
            Error::AdmissibilityViolated { .. } => "AdmissibilityViolated",
            Error::ContractionFailure { .. } => "ContractionFailure",
            Error::StripViolated { .. } => "StripViolated",
            Error::ConeViolated { .. } => "ConeViolated",
            Error::DegenerateSequence { .. } => "DegenerateSequence",
            Error::Config { .. } => "ConfigError",
            Error::Io(_) => "IoError",
        }
    }
}
