use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Errors raised by construction and verification routines.
///
/// Verification suites report failed checks as records, not errors; an `Error`
/// always means the computation could not be carried out as posed.
#[derive(Debug, Error)]
pub enum Error {
    #[error("atom `{label}` has non-positive probability {prob}")]
    NonPositiveProb { label: String, prob: f64 },
    #[error("atom probabilities sum to {sum}, expected 1 within {tol}")]
    ProbSumMismatch { sum: f64, tol: f64 },
    #[error("duplicate atom label `{0}`")]
    DuplicateLabel(String),
    #[error("supremum of an empty family is undefined")]
    EmptyFamily,
    #[error("operands live on different probability spaces")]
    SpaceMismatch,
    #[error("operands live on different time grids")]
    GridMismatch,
    #[error("invalid time grid: {0}")]
    InvalidGrid(String),
    #[error("non-finite value at atom {atom}, position {index}")]
    NonFinite { atom: usize, index: usize },
    #[error("exponent {value} at atom {atom} exceeds the overflow guard ({limit})")]
    Overflow { atom: usize, value: f64, limit: f64 },
    #[error("multiplier has a zero entry at atom {atom}, node {node}; operator is singular")]
    SingularMultiplier { atom: usize, node: usize },
    #[error("probe set is empty")]
    EmptyProbeSet,
    #[error("composite Simpson requires an even panel count, got {0}")]
    OddPanelCount(usize),
    #[error("parameter {value} outside domain [{lo}, {hi}]")]
    DomainViolation { value: f64, lo: f64, hi: f64 },
    #[error("operator norm is not positive at atom {atom}; cannot fit an exponential bound")]
    NonPositiveNorm { atom: usize },
    #[error("check requires a claimed generator, none was attached")]
    MissingGenerator,
    #[error("injector C is singular: {0}")]
    SingularC(String),
    #[error("C-inverse condition {condition} exceeds the cap {cap} at atom {atom}")]
    ConditionExceeded { atom: usize, condition: f64, cap: f64 },
    #[error("trajectory covers [0, {covered}], problem horizon is {horizon}")]
    HorizonMismatch { covered: f64, horizon: f64 },
    #[error("orbit is not numerically differentiable: error estimate {estimate} above {tol}")]
    NotDifferentiable { estimate: f64, tol: f64 },
    #[error("candidate fails the locally L0-Lipschitz certificate: {0}")]
    LipschitzCertificateFailed(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("configuration error: {0}")]
    ConfigParse(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}
