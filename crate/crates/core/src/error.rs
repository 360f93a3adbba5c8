use thiserror::Error;

/// Errors raised by the numerical kernel and the model layers built on it.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("matrix must be square, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("time must be finite and nonnegative, got {0}")]
    NegativeTime(f64),
    #[error("singular matrix (condition estimate {condition:e})")]
    Singular { condition: f64 },
    #[error("eigenvalue iteration failed to converge")]
    EigenFailure,
    #[error("unsupported spectrum: {0}")]
    UnsupportedSpectrum(&'static str),
    #[error("projector has imaginary residue {0:e}")]
    ComplexResidue(f64),
    #[error("quadrature did not reach tolerance {tol:e}: estimate {estimate}, error {error:e}")]
    Accuracy { estimate: f64, error: f64, tol: f64 },
    #[error("sign violation in {matrix}[{row}][{col}] = {value}")]
    Sign {
        matrix: &'static str,
        row: usize,
        col: usize,
        value: f64,
    },
    #[error("row {row}: T*1 + D*1 residual {residual:e} exceeds tolerance")]
    RowSum { row: usize, residual: f64 },
    #[error("sub-intensity matrix is singular: absorption is not certain")]
    SingularSubIntensity,
    #[error("invalid initial law: {0}")]
    InitialLaw(String),
    #[error("invalid mixing weight at state {state}: {value}")]
    Mixing { state: usize, value: f64 },
    #[error("speed matrix has psi[{state}] = 0; {operation} needs an invertible speed matrix")]
    SingularSpeed { state: usize, operation: &'static str },
    #[error("state {state} out of range (state space has {size} states)")]
    StateOutOfRange { state: usize, size: usize },
    #[error("state {0} is absorbing")]
    AbsorbingState(usize),
    #[error("cause {cause} out of range 1..={count}")]
    CauseOutOfRange { cause: usize, count: usize },
    #[error("operation requires a single absorbing state, model has {0}")]
    NotSingleAbsorbing(usize),
    #[error("horizon {horizon} precedes age {age}")]
    HorizonBeforeAge { age: f64, horizon: f64 },
    #[error("both regime likelihoods vanish for the observed path")]
    DegenerateInformation,
    #[error("state {state} cannot be reached under the stated information")]
    Unreachable { state: usize },
    #[error("survival probability vanishes; intensity is out of support")]
    OutOfSupport,
    #[error("ultimate absorption probability for cause {0} is zero")]
    ZeroCauseProbability(usize),
    #[error("invalid path: {0}")]
    Path(String),
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("insufficient sample: {found} paths, need {needed}")]
    InsufficientSample { found: usize, needed: usize },
    #[error("empty input: {0}")]
    Empty(&'static str),
    #[error("curve format: {0}")]
    Curve(String),
}

pub type Result<T> = std::result::Result<T, Error>;
