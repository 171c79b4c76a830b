use thiserror::Error;

/// Every failure mode of the laboratory.
///
/// Variants are grouped by the layer that raises them; [`Error::class`]
/// folds them into the three process-level classes used for exit codes
/// and the C ABI.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    // arithmetic
    #[error(
        "Euclidean iteration terminated exactly after {quotients} quotients: input is rational"
    )]
    RationalInput { quotients: usize },
    #[error("precision exhausted after {obtained} partial quotients (need at least 3)")]
    PrecisionExhausted { obtained: usize },
    #[error("expansion has {have} convergents, at least 3 required")]
    InsufficientDepth { have: usize },
    #[error("Liouville construction requires beta > 0")]
    GuardBetaZero,
    #[error("integer budget exceeded after {achieved} partial quotients")]
    Overflow { achieved: usize },
    #[error("no admissible n_0 within stored depth for index {n}")]
    DepthError { n: usize },
    #[error("degenerate resonance scale: s = 0")]
    DegenerateS,
    #[error("|k| = {k} exceeds q_(n+1) = {limit}")]
    OutOfWindow { k: i128, limit: u128 },

    // model
    #[error("singular site at n = {index} (phase {phase})")]
    SingularSite { index: i64, phase: f64 },
    #[error("energy within {distance:e} of the block spectrum")]
    NearSingularEnergy { distance: f64 },
    #[error("k = {0} admits no admissible interval (k >= 2 required)")]
    InvalidK(i64),
    #[error("index {index} outside the block [{lo}, {hi}]")]
    OutsideBlock { index: i64, lo: i64, hi: i64 },

    // dynamics
    #[error("trace does not cover the sites needed for L = {length}")]
    RangeError { length: f64 },
    #[error("traces are not a conjugate angle pair")]
    AngleMismatch,
    #[error("degenerate length scale: {0}")]
    DegenerateScale(String),

    // spectral
    #[error("m-function did not converge up to N = {size}")]
    NoConvergence { size: usize },
    #[error("|m+ + m-| = {0:e} too small for the combination identity")]
    Cancellation(f64),
    #[error("scale {eps:e} below the resolution floor {floor:e}")]
    ResolutionFloor { eps: f64, floor: f64 },
    #[error("no mass in the window around E = {energy}")]
    EmptyWindow { energy: f64 },
    #[error("empty sample")]
    EmptySample,

    // dimension
    #[error("beta must be positive")]
    BetaZero,

    // verify
    #[error("no block eigenvalue within tolerance of E = {target} (nearest {nearest})")]
    NoEigenvectorNearE { target: f64, nearest: f64 },
    #[error("no j_0 satisfies the block bound (best margin {best_margin})")]
    SearchExhausted { best_margin: f64 },

    // shared
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("i/o error: {0}")]
    Io(String),
}

/// Coarse classification shared by the CLI exit codes and the C ABI.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Config,
    Numeric,
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Config(_) | Error::Io(_) | Error::InvalidParameter(_) => ErrorClass::Config,
            _ => ErrorClass::Numeric,
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
