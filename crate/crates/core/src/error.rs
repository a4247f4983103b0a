use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("degenerate frame on atom {atom} (volume {volume:e})")]
    DegenerateFrame { atom: usize, volume: f64 },

    #[error("affine map is singular (|det| = {det:e})")]
    SingularMap { det: f64 },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("operation requires oriented frames but the varifold has d = 0")]
    MissingFrame,

    #[error("non-finite value encountered at step {step}")]
    NonFinite { step: usize },

    #[error("antipodal directions: the geodesic is not unique")]
    AntipodalDirections,

    #[error("invalid weights: {0}")]
    InvalidWeights(String),

    #[error("non-positive jacobian for atom {atom} at grid index {index}")]
    NonPositiveJacobian { atom: usize, index: usize },

    #[error("point set is empty")]
    EmptySet,

    #[error("line search failed after {evaluations} evaluations")]
    LineSearchFailure { evaluations: usize },

    #[error("objective is not finite")]
    NonFiniteObjective,

    #[error("initial shooting failed: {0}")]
    InfeasibleInit(Box<Error>),

    #[error("internal consistency check failed: {0}")]
    Consistency(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("schema error: {0}")]
    Schema(String),
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        use serde_json::error::Category;
        match e.classify() {
            Category::Data => Error::Schema(e.to_string()),
            Category::Io => Error::Io(e.into()),
            _ => Error::Parse(e.to_string()),
        }
    }
}
