use thiserror::Error;

/// Errors produced by the analysis and simulation routines.
///
/// Vertex labels carried in errors are 1-based, matching the file formats.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("graph needs at least 2 vertices, got {0}")]
    TooFewVertices(usize),
    #[error("self-loop at vertex {0}")]
    SelfLoop(usize),
    #[error("duplicate edge ({0}, {1})")]
    DuplicateEdge(usize, usize),
    #[error("edge ({0}, {1}) references a vertex outside 1..={2}")]
    VertexOutOfRange(usize, usize, usize),
    #[error("vector norm {0:e} is below the separation threshold")]
    DegenerateVector(f64),
    #[error("edge ({0}, {1}) is degenerate: endpoints coincide")]
    DegenerateEdge(usize, usize),
    #[error("vertices {0} and {1} coincide")]
    CoincidentVertices(usize, usize),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("empty matrix")]
    EmptyMatrix,
    #[error("non-finite entry in input")]
    NonFinite,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("bearing for edge ({0}, {1}) is not a unit vector (norm {2})")]
    NonUnitBearing(usize, usize, f64),
    #[error("bearings for ({0}, {1}) and ({1}, {0}) are not opposite")]
    InconsistentBearing(usize, usize),
    #[error("no bearing given for edge ({0}, {1})")]
    MissingBearing(usize, usize),
    #[error("bearing constraints are not infinitesimally bearing rigid (nullity {nullity}, expected {expected})")]
    NotRigid { nullity: usize, expected: usize },
    #[error("bearing constraints are infeasible")]
    Infeasible,
    #[error(
        "sign of the target scale cannot be determined: every edge is orthogonal to its bearing"
    )]
    AmbiguousSign,
    #[error("matrix is not skew-symmetric (asymmetry {0:e})")]
    NotSkewSymmetric(f64),
    #[error("numeric failure: non-finite state at step {step}")]
    NumericFailure { step: usize },
    /// Malformed or invalid formation file; `pointer` is a JSON pointer.
    #[error("{message} (at `{pointer}`)")]
    Spec { pointer: String, message: String },
    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    /// Short machine-readable category.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::NumericFailure { .. } => "numeric",
            Error::Io(_) => "io",
            Error::Spec { .. } => "spec",
            _ => "validation",
        }
    }

    pub(crate) fn spec(pointer: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Spec {
            pointer: pointer.into(),
            message: message.into(),
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
