use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Malformed or inconsistent input (bad parameters, points outside the domain, ...).
    #[error("invalid input: {0}")]
    Invalid(String),

    /// A sample point lies outside the state domain.
    #[error("point #{index} lies outside the domain")]
    OutsideDomain { index: usize },

    /// Damped Newton did not reach the requested gradient tolerance.
    #[error("newton solver did not converge after {iterations} iterations (residual {residual:.3e})")]
    NoConvergence { iterations: usize, residual: f64 },

    /// A numerical routine hit a state it cannot handle (empty support, boundary velocity, ...).
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// A segment-level failure, tagged with the offending segment index.
    #[error("segment {segment}: {source}")]
    Segment {
        segment: usize,
        #[source]
        source: Box<Error>,
    },

    /// Exhaustive enumeration would exceed the configured cap.
    #[error("enumeration needs {required} sequences but the cap is {cap}")]
    CapExceeded { required: u128, cap: u128 },

    #[error("config: {0}")]
    Config(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }

    pub(crate) fn at_segment(self, segment: usize) -> Self {
        Error::Segment {
            segment,
            source: Box::new(self),
        }
    }
}
