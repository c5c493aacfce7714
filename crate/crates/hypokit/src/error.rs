use alloc::string::String;
use core::fmt;

/// Errors raised by the toolkit.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Malformed input: non-finite numbers, wrong shapes, negative tolerances.
    InvalidInput(String),
    /// Parameters outside the domain where an operation is defined
    /// (non-SPD matrices, unnormalizable densities, violated preconditions).
    Domain(String),
    /// A result would overflow the floating-point range.
    Range(String),
    /// No decay-rate formula covers the given `(c, α₀, ν)` combination.
    UncoveredRegion { c: f64, alpha0: f64, nu: f64 },
    /// The requested time step breaks the transport stability bound.
    Cfl { courant: f64, limit: f64 },
}

pub type Result<T> = core::result::Result<T, Error>;

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::InvalidInput(msg) => write!(f, "invalid input: {msg}"),
            Error::Domain(msg) => write!(f, "domain error: {msg}"),
            Error::Range(msg) => write!(f, "range error: {msg}"),
            Error::UncoveredRegion { c, alpha0, nu } => write!(
                f,
                "no rate formula covers c = {c}, alpha0 = {alpha0}, nu = {nu}"
            ),
            Error::Cfl { courant, limit } => {
                write!(f, "time step too large: Courant number {courant} exceeds {limit}")
            }
        }
    }
}

impl core::error::Error for Error {}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidInput(msg.into())
}

pub(crate) fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}
