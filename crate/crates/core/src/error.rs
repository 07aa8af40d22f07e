use thiserror::Error;

use crate::weights::Interval;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Location of a failing entry inside the sensitivity system.
///
/// `l` and `j` are only present for off-diagonal `a` entries.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EntryCoord {
    pub k: usize,
    pub i: usize,
    pub l: Option<usize>,
    pub j: Option<usize>,
}

impl std::fmt::Display for EntryCoord {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match (self.l, self.j) {
            (Some(l), Some(j)) => write!(f, "(k={}, l={}, i={}, j={})", self.k, l, self.i, j),
            _ => write!(f, "(k={}, i={})", self.k, self.i),
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("x = {x} lies outside the open support {support}")]
    Domain { x: f64, support: Interval },

    #[error("weight underflows to zero at x = {x}; logarithmic derivative undefined")]
    Underflow { x: f64 },

    #[error("parameter `{name}` = {value} outside admissible range {range}")]
    ParameterRange {
        name: String,
        value: f64,
        range: &'static str,
    },

    #[error("invalid weight specification: {0}")]
    WeightSpec(String),

    #[error("non-finite integrand value {value} at quadrature node x = {x}")]
    NonFiniteIntegrand { x: f64, value: f64 },

    #[error("quadrature did not converge after {levels} levels (value {value:e}, error estimate {error_estimate:e})")]
    NotConverged {
        value: f64,
        error_estimate: f64,
        levels: u32,
    },

    #[error("moment system is ill-conditioned (condition estimate {condition:e})")]
    IllConditioned { condition: f64 },

    #[error("linear system is numerically singular (condition estimate {condition:e})")]
    Singular { condition: f64 },

    #[error("orthogonality residual {residual:e} for (k={k}, j={j}) exceeds tolerance {tolerance:e}")]
    Residual {
        k: usize,
        j: usize,
        residual: f64,
        tolerance: f64,
    },

    #[error("found {found} sign changes in block {block}, expected {expected}")]
    ZeroIsolation {
        block: usize,
        expected: usize,
        found: usize,
    },

    #[error("normalizer d = {d:e} for (k={k}, i={i}) is negligible against its integral scale {scale:e}")]
    DegenerateNormalizer { k: usize, i: usize, d: f64, scale: f64 },

    #[error("solve residual {residual:e} exceeds tolerance {tolerance:e}")]
    SolveResidual { residual: f64, tolerance: f64 },

    #[error("boundary term at the moving endpoint x = {x} is not finite ({value})")]
    BoundaryTerm { x: f64, value: f64 },

    #[error("invalid Angelesco system: {0}")]
    InvalidSystem(String),

    #[error("invalid partition: {0}")]
    InvalidPartition(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("entry {coord} failed: {source}")]
    Entry {
        coord: EntryCoord,
        #[source]
        source: Box<Error>,
    },

    #[error("finite-difference step at t = {t} failed: {source}")]
    FiniteDifference {
        t: f64,
        #[source]
        source: Box<Error>,
    },

    #[error("non-finite sample {value} at x = {x}")]
    NonFiniteSample { x: f64, value: f64 },
}

impl Error {
    pub(crate) fn at_entry(self, coord: EntryCoord) -> Self {
        Error::Entry {
            coord,
            source: Box::new(self),
        }
    }
}
