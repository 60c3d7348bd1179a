use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("operator is singular or nearly so (min |eigenvalue| estimate {estimate:.3e} <= {tolerance:.3e})")]
    SingularOperator { estimate: f64, tolerance: f64 },

    #[error("{method} did not converge after {iterations} iterations (relative residual {residual:.3e}){hint}")]
    NonConvergence {
        method: &'static str,
        iterations: usize,
        residual: f64,
        history: Vec<f64>,
        hint: String,
    },

    #[error("frequency {kappa:?} lies outside the admissible cone: |zeta - xi| = {distance:.4} >= epsilon = {epsilon}")]
    ConeViolation {
        kappa: [f64; 3],
        distance: f64,
        epsilon: f64,
    },

    #[error("geometry error: {0}")]
    Geometry(String),

    #[error("trace support violation: {0}")]
    Support(String),

    #[error("out of regime: {0}")]
    OutOfRegime(String),

    #[error("{failed} of {total} Fourier estimates failed")]
    TooManyFailures { failed: usize, total: usize },

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Serde(String),
}

impl From<serde_json::Error> for Error {
    fn from(err: serde_json::Error) -> Self {
        Error::Serde(err.to_string())
    }
}
