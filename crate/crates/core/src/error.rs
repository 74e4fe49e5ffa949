use thiserror::Error;

/// Problems with a site law or one of its triples.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum LawError {
    #[error("malformed law: {0}")]
    Malformed(String),
    #[error("uniform ellipticity violated by atom {index}: w_plus = {plus}, w_minus = {minus}")]
    EllipticityViolation { index: usize, plus: f64, minus: f64 },
    #[error("invalid decay sequence: {0}")]
    InvalidSequence(String),
    #[error("parse error on line {line}: {message}")]
    Parse { line: usize, message: String },
}

/// Failures of the potential / valley machinery.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum PotentialError {
    #[error("index {index} outside environment window [{lo}, {hi}]")]
    OutOfWindow { index: i64, lo: i64, hi: i64 },
    #[error("potential needs the origin inside the window [{lo}, {hi}]")]
    OriginOutsideWindow { lo: i64, hi: i64 },
    #[error("invalid interval [{a}, {c}]")]
    InvalidInterval { a: f64, c: f64 },
    #[error("invalid valley parameters: {0}")]
    InvalidParameters(String),
}

/// Failures of the exponent machinery.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum RateError {
    #[error("conditioning event {{w_zero <= 1/k}} has probability zero")]
    EmptyConditioning,
    #[error("P(w_zero <= 1/k) = 1: killing is degenerate and the tilt root is t = 0")]
    DegenerateKilling,
    #[error("no positive tilt root: the conditioned log-ratio has no positive support on this side")]
    NoPositiveRoot,
    #[error("nontriviality violated: eps_plus = {eps_plus}, eps_minus = {eps_minus}")]
    NontrivialityViolation { eps_plus: f64, eps_minus: f64 },
    #[error("width {b} below the admissible range (minimum {min})")]
    OutsideAdmissibleRange { b: f64, min: f64 },
    #[error("regime is unclassified; no decay prediction available")]
    UnclassifiedRegime,
    #[error("conditioned log-ratio is not supported on a lattice")]
    NonLattice,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

/// Failures of the quenched walk computations.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum WalkError {
    #[error("window [{lo}, {hi}] does not cover the required range [{need_lo}, {need_hi}]")]
    WindowTooSmall { lo: i64, hi: i64, need_lo: i64, need_hi: i64 },
    #[error("index {index} outside environment window [{lo}, {hi}]")]
    OutOfWindow { index: i64, lo: i64, hi: i64 },
    #[error("horizon {n} too large for path enumeration (max {max})")]
    HorizonTooLarge { n: usize, max: usize },
    #[error("killing probability {0} outside [0, 1]")]
    InvalidKilling(f64),
    #[error("invalid interval: a = {a}, start = {start}, c = {c}")]
    InvalidInterval { a: i64, start: i64, c: i64 },
}

/// Failures of the annealed layer (curves and fits).
#[derive(Debug, Clone, PartialEq, Error)]
pub enum AnnealedError {
    #[error(transparent)]
    Walk(#[from] WalkError),
    #[error(transparent)]
    Law(#[from] LawError),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("insufficient data for a fit: {usable} usable points, need at least {needed}")]
    InsufficientData { usable: usize, needed: usize },
    #[error("degenerate curve: every survival value is 0 or 1")]
    DegenerateCurve,
    #[error("cannot fit an unclassified regime")]
    UnclassifiedRegime,
    #[error("curve parse error on line {line}: {message}")]
    Parse { line: usize, message: String },
}
