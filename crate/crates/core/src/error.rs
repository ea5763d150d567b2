use std::fmt;

/// Which end of the half-line makes a Lévy integral diverge.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DivergentEnd {
    Zero,
    Infinity,
}

impl fmt::Display for DivergentEnd {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DivergentEnd::Zero => f.write_str("zero"),
            DivergentEnd::Infinity => f.write_str("infinity"),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Malformed, non-finite, negative or non-normalizable measure data.
    #[error("INVALID_MEASURE: {0}")]
    InvalidMeasure(String),
    /// Malformed user input that is not a measure (kernel string, option value).
    #[error("INVALID_INPUT: {0}")]
    InvalidInput(String),
    /// The requested quantity has no usable numerical representation here.
    #[error("UNAVAILABLE: {0}")]
    Unavailable(String),
    /// An inversion produced a signed or non-normalizable measure.
    #[error("NOT_A_MIXTURE: {0}")]
    NotAMixture(String),
    /// The operation is not implemented for this kernel family.
    #[error("UNSUPPORTED_KERNEL: {0}")]
    UnsupportedKernel(String),
    /// A fractional power does not exist as a probability measure.
    #[error("NOT_INFINITELY_DIVISIBLE: {0}")]
    NotInfinitelyDivisible(String),
    /// The CLT check needs at least two truncation levels.
    #[error("TRUNCATION_TOO_SHORT: {0}")]
    TruncationTooShort(String),
    /// The requested stability exponent exceeds the kernel's critical exponent.
    #[error("UNSUPPORTED_EXPONENT: p = {p} exceeds kappa = {kappa}")]
    UnsupportedExponent { p: f64, kappa: f64 },
    /// Subordination exponents must satisfy 0 < q < p.
    #[error("INVALID_EXPONENTS: {0}")]
    InvalidExponents(String),
    /// The Lévy integrability condition fails at the named end.
    #[error("DIVERGENT_LEVY_MEASURE: integral diverges at {end}: {detail}")]
    DivergentLevyMeasure { end: DivergentEnd, detail: String },
    /// No stable element exists for this kernel and exponent.
    #[error("NO_STABLE_ELEMENT: {0}")]
    NoStableElement(String),
    /// An iterative scheme failed to reach its tolerance.
    #[error("NO_CONVERGENCE: {0}")]
    NoConvergence(String),
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::NotAMixture(_)
            | Error::DivergentLevyMeasure { .. }
            | Error::NoConvergence(_)
            | Error::NotInfinitelyDivisible(_)
            | Error::Unavailable(_)
            | Error::NoStableElement(_) => 2,
            _ => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
