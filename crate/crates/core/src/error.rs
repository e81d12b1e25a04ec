use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid domain: {0}")]
    InvalidDomain(String),

    #[error("x = {x} lies outside [0, {length}]")]
    OutOfDomain { x: f64, length: f64 },

    #[error("noise spectrum is not nonincreasing in gamma^2 at mode {index}")]
    NonMonotone { index: usize },

    #[error("gamma_{index}^2 = {gamma_sq} exceeds the cap c/n^alpha = {cap}")]
    CapViolation { index: usize, gamma_sq: f64, cap: f64 },

    #[error("alpha = {alpha} does not give a summable spectrum")]
    SpectrumDivergent { alpha: f64 },

    #[error("mode 0 has no stationary law")]
    ZeroMode,

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("anti-aliasing rule violated: n_x = {n_x} < 4 * n_modes = {}", 4 * n_modes)]
    AliasRule { n_x: usize, n_modes: usize },

    #[error("beta must be nonnegative, got {0}")]
    NegativeBeta(f64),

    #[error("importance weights underflow; the estimate is degenerate")]
    DegenerateWeights,

    #[error("rho must lie in (0, 1], got {0}")]
    RhoOutOfRange(f64),

    #[error("drift tilt is only defined on mode 1, got mode {0}")]
    TiltMode(usize),

    #[error("exponent balance has no solution")]
    NoSolution,

    #[error("power-law fit needs positive means, got {0}")]
    NonPositiveMean(f64),

    #[error("need at least {need} points, got {got}")]
    TooFewPoints { need: usize, got: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T> = std::result::Result<T, Error>;
