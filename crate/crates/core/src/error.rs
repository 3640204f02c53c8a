use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("enumeration limit exceeded: {what} has {size} entries (limit {limit})")]
    EnumerationLimit {
        what: &'static str,
        size: u128,
        limit: u128,
    },

    #[error("invalid probability vector for {what}: {reason}")]
    InvalidDistribution { what: String, reason: String },

    #[error("kernel has no row for dataset index {0} of positive mass")]
    IncompleteKernel(usize),

    #[error("conditional undefined: dataset index {0} has zero mass")]
    UndefinedConditional(usize),

    #[error("index {index} out of range 0..={max}")]
    IndexOutOfRange { index: usize, max: usize },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("subgradient undefined at the boundary of the domain: {0}")]
    BoundarySubgradient(String),

    #[error("absolute continuity violated: {0}")]
    AbsoluteContinuity(String),

    #[error("parameter out of range: {0}")]
    Parameter(String),

    #[error("series diverges: sigma*sqrt(d) = {0} >= 1")]
    DivergentSeries(f64),

    #[error("quadrature did not converge: achieved {achieved:e}, wanted {wanted:e}")]
    Quadrature { achieved: f64, wanted: f64 },

    #[error("linear program failed: {0}")]
    Lp(String),

    #[error("unknown registry entry: {0}")]
    UnknownRegistry(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("iterate left the certified window [-{radius}, {radius}]: {value}")]
    WindowViolation { radius: f64, value: f64 },

    #[error("io error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
