use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("density must be positive, got {0}")]
    NonPositiveDensity(f64),
    #[error("base state is not subsonic: g'({rho0}) = {g_prime} <= 0")]
    SupersonicBaseState { rho0: f64, g_prime: f64 },
    #[error("speed c = {c} is not subsonic (c_s = {c_s})")]
    SupersonicSpeed { c: f64, c_s: f64 },
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("potential extension is not coercive (c1 = {0})")]
    ExtensionNotCoercive(f64),

    #[error("no sign change of F found in ({lo}, {hi})")]
    BracketScanFailed { lo: f64, hi: f64 },
    #[error("no homoclinic orbit at c = {c}: {reason}")]
    NoHomoclinicOrbit { c: f64, reason: String },
    #[error("quadrature failure: {0}")]
    QuadratureFailure(String),
    #[error("speed {c} outside tabulated range [{lo}, {hi}]")]
    SpeedOutsideCurve { c: f64, lo: f64, hi: f64 },

    #[error("grid too coarse: {0}")]
    GridTooCoarse(String),
    #[error("inverse iteration stalled after {0} iterations")]
    InverseIterationStalled(usize),

    #[error("density fell below floor {floor} (min {min}) at t = {t}")]
    VacuumApproached { t: f64, min: f64, floor: f64 },
    #[error("time step {dt} exceeds stability bound {bound}")]
    CflViolation { dt: f64, bound: f64 },

    #[error("grid too small: {0}")]
    GridTooSmall(String),
    #[error("degenerate Gamma = {0}")]
    DegenerateGamma(f64),
    #[error("torus too small: boundary defect {defect:e} exceeds {tol:e}")]
    TorusTooSmall { defect: f64, tol: f64 },
    #[error("no convergence after {iterations} iterations (residual {residual:e})")]
    MaxIterations { iterations: usize, residual: f64 },
    #[error("momentum constraint gradient vanishes")]
    ConstraintSingular,
    #[error("density became non-positive (min {0})")]
    RhoNonPositive(f64),

    #[error("bad magic bytes")]
    BadMagic,
    #[error("truncated payload: expected {expected} bytes, found {found}")]
    TruncatedPayload { expected: usize, found: usize },
    #[error("header mismatch: {0}")]
    HeaderMismatch(String),
    #[error("parse error at line {line}, column {column}: {msg}")]
    Parse { line: usize, column: usize, msg: String },
    #[error("invalid value for `{field}`: {msg}")]
    Validation { field: String, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Stable variant name, used in JSON error reports.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::NonPositiveDensity(_) => "NonPositiveDensity",
            Error::SupersonicBaseState { .. } => "SupersonicBaseState",
            Error::SupersonicSpeed { .. } => "SupersonicSpeed",
            Error::InvalidModel(_) => "InvalidModel",
            Error::ExtensionNotCoercive(_) => "ExtensionNotCoercive",
            Error::BracketScanFailed { .. } => "BracketScanFailed",
            Error::NoHomoclinicOrbit { .. } => "NoHomoclinicOrbit",
            Error::QuadratureFailure(_) => "QuadratureFailure",
            Error::SpeedOutsideCurve { .. } => "SpeedOutsideCurve",
            Error::GridTooCoarse(_) => "GridTooCoarse",
            Error::InverseIterationStalled(_) => "InverseIterationStalled",
            Error::VacuumApproached { .. } => "VacuumApproached",
            Error::CflViolation { .. } => "CflViolation",
            Error::GridTooSmall(_) => "GridTooSmall",
            Error::DegenerateGamma(_) => "DegenerateGamma",
            Error::TorusTooSmall { .. } => "TorusTooSmall",
            Error::MaxIterations { .. } => "MaxIterations",
            Error::ConstraintSingular => "ConstraintSingular",
            Error::RhoNonPositive(_) => "RhoNonPositive",
            Error::BadMagic => "BadMagic",
            Error::TruncatedPayload { .. } => "TruncatedPayload",
            Error::HeaderMismatch(_) => "HeaderMismatch",
            Error::Parse { .. } => "ParseError",
            Error::Validation { .. } => "ValidationError",
            Error::Io(_) => "IoError",
        }
    }

    /// CLI exit code class: 2 config, 3 numerical, 4 I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Parse { .. } | Error::Validation { .. } | Error::InvalidModel(_) => 2,
            Error::Io(_) | Error::BadMagic | Error::TruncatedPayload { .. } | Error::HeaderMismatch(_) => 4,
            _ => 3,
        }
    }
}
