use thiserror::Error;

/// Errors raised across the crate.
///
/// Variants fall into two groups: input validation (bad shapes, invalid
/// measures, malformed specs) and numerical failures (singular systems,
/// non-converged solvers). [`Error::is_validation`] tells them apart.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("measure has no atoms")]
    EmptySupport,

    #[error("negative weight {weight} at atom {index}")]
    NegativeWeight { index: usize, weight: f64 },

    #[error("weights sum to {sum}, off from 1 by more than the tolerance")]
    WeightSumOffByMoreThanTolerance { sum: f64 },

    #[error("atom {index} lies outside the domain box")]
    AtomOutsideDomain { index: usize },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("invalid domain box: {0}")]
    InvalidBox(String),

    #[error("invalid sampler: {0}")]
    InvalidSampler(String),

    #[error("sampler support is not contained in the domain box")]
    SupportOutsideDomain,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("combined support size {0} exceeds the exact solver limit")]
    SupportTooLarge(usize),

    #[error("support {rows}x{cols} is too large for brute-force enumeration (max 4x4)")]
    SupportTooLargeForBruteForce { rows: usize, cols: usize },

    #[error("one-dimensional solver called on dimension {0}")]
    DimensionNotOne(usize),

    #[error("table kernel index {0} is not a valid grid index")]
    InvalidTableIndex(f64),

    #[error("negative radicand {0} (kernel is not positive semidefinite)")]
    NegativeRadicand(f64),

    #[error("negative squared RKHS norm {0}")]
    NegativeSquaredNorm(f64),

    #[error("candidate set is empty")]
    EmptyCandidates,

    #[error("modulus of continuity is not concave and nondecreasing")]
    ModulusNotConcave,

    #[error("configuration has {got} particles, expected {expected}")]
    ConfigurationSizeMismatch { expected: usize, got: usize },

    #[error("matrix is not symmetric (max asymmetry {0})")]
    NonSymmetricInput(f64),

    #[error("kernel specifications of the two expansions differ")]
    KernelSpecMismatch,

    #[error("linear system is singular after jitter escalation")]
    SingularSystem,

    #[error("no explicit mean-field limit available: {0}")]
    UnknownLimit(String),

    #[error("no analytic modulus of continuity available for this kernel")]
    NoAnalyticModulus,

    #[error("configurations do not share particle count and dimension")]
    HeterogeneousConfigs,

    #[error("quadrature did not reach the requested agreement ({0:e})")]
    QuadratureNotConverged(f64),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for errors caused by invalid input rather than numerical failure.
    pub fn is_validation(&self) -> bool {
        !matches!(
            self,
            Error::SingularSystem
                | Error::NegativeRadicand(_)
                | Error::NegativeSquaredNorm(_)
                | Error::QuadratureNotConverged(_)
                | Error::Io(_)
        )
    }

    /// Stable, machine-parseable tag for diagnostics.
    pub fn tag(&self) -> &'static str {
        match self {
            Error::DimensionMismatch { .. } => "DIMENSION_MISMATCH",
            Error::EmptySupport => "EMPTY_SUPPORT",
            Error::NegativeWeight { .. } => "NEGATIVE_WEIGHT",
            Error::WeightSumOffByMoreThanTolerance { .. } => "WEIGHT_SUM",
            Error::AtomOutsideDomain { .. } => "ATOM_OUTSIDE_DOMAIN",
            Error::NonFinite(_) => "NON_FINITE",
            Error::InvalidBox(_) => "INVALID_BOX",
            Error::InvalidSampler(_) => "INVALID_SAMPLER",
            Error::SupportOutsideDomain => "SUPPORT_OUTSIDE_DOMAIN",
            Error::InvalidParameter(_) => "INVALID_PARAMETER",
            Error::SupportTooLarge(_) => "SUPPORT_TOO_LARGE",
            Error::SupportTooLargeForBruteForce { .. } => "SUPPORT_TOO_LARGE_FOR_BRUTE_FORCE",
            Error::DimensionNotOne(_) => "DIMENSION_NOT_ONE",
            Error::InvalidTableIndex(_) => "INVALID_TABLE_INDEX",
            Error::NegativeRadicand(_) => "NEGATIVE_RADICAND",
            Error::NegativeSquaredNorm(_) => "NEGATIVE_SQUARED_NORM",
            Error::EmptyCandidates => "EMPTY_CANDIDATES",
            Error::ModulusNotConcave => "MODULUS_NOT_CONCAVE",
            Error::ConfigurationSizeMismatch { .. } => "CONFIGURATION_SIZE_MISMATCH",
            Error::NonSymmetricInput(_) => "NON_SYMMETRIC_INPUT",
            Error::KernelSpecMismatch => "KERNEL_SPEC_MISMATCH",
            Error::SingularSystem => "SINGULAR_SYSTEM",
            Error::UnknownLimit(_) => "UNKNOWN_LIMIT",
            Error::NoAnalyticModulus => "NO_ANALYTIC_MODULUS",
            Error::HeterogeneousConfigs => "HETEROGENEOUS_CONFIGS",
            Error::QuadratureNotConverged(_) => "QUADRATURE_NOT_CONVERGED",
            Error::Parse(_) => "CONFIG_PARSE",
            Error::Io(_) => "IO",
            Error::Json(_) => "CONFIG_PARSE",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
