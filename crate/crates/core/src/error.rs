use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// An input outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// The Fock tail beyond the cutoff carries more weight than allowed.
    #[error("truncation error: tail mass {tail:e} beyond n_max = {n_max} exceeds tolerance {tolerance:e}")]
    Truncation { tail: f64, n_max: usize, tolerance: f64 },

    /// The required cutoff exceeds the configured hard limit.
    #[error("resource error: cutoff {required} exceeds the hard limit {limit}")]
    Resource { required: usize, limit: usize },

    /// A matrix that should be real symmetric carries imaginary parts.
    #[error("convention error: imaginary part {max_imag:e} in a matrix expected to be real symmetric")]
    Convention { max_imag: f64 },

    #[error("positivity error: eigenvalue {eigenvalue:e} below the floor")]
    Positivity { eigenvalue: f64 },

    #[error("eigensolver failed: {0}")]
    Eigen(String),

    #[error("grid coverage error: pdf normalization deficit {deficit:e}")]
    GridCoverage { deficit: f64 },

    #[error("range error: {0}")]
    Range(String),

    #[error("no crossing: regime is {regime} at both ends of [{lo}, {hi}]")]
    NoCrossing { lo: f64, hi: f64, regime: String },

    #[error("estimation error: {0}")]
    Estimation(String),

    #[error("fit error: {0}")]
    Fit(String),

    /// A zero Fisher information leaves the phase variance unbounded.
    #[error("unbounded variance: Fisher information is zero")]
    UnboundedVariance,
}

pub(crate) fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}
