use std::fmt;

/// Errors surfaced by construction, parsing, and capped enumerations.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Error {
    /// The group/model spec string could not be parsed.
    SpecParse(String),
    /// A construction-time bound was exceeded (closure size, order, ball size).
    CapExceeded {
        what: String,
        limit: u64,
        requested: u64,
    },
    /// An argument was outside its documented domain.
    InvalidArg(String),
    /// Subsets over different universes were mixed.
    UniverseMismatch { expected: usize, got: usize },
    /// An internal exactness invariant failed; indicates a bug, not bad input.
    InternalInvariant(String),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::SpecParse(msg) => write!(f, "spec parse error: {msg}"),
            Error::CapExceeded {
                what,
                limit,
                requested,
            } => {
                write!(
                    f,
                    "cap exceeded for {what}: requested {requested}, limit {limit}"
                )
            }
            Error::InvalidArg(msg) => write!(f, "invalid argument: {msg}"),
            Error::UniverseMismatch { expected, got } => {
                write!(f, "universe mismatch: expected size {expected}, got {got}")
            }
            Error::InternalInvariant(msg) => write!(f, "internal invariant violated: {msg}"),
        }
    }
}

impl std::error::Error for Error {}

pub type Result<T> = std::result::Result<T, Error>;
