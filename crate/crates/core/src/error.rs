use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("shape mismatch: expected {expected} values, got {got}")]
    Shape { expected: usize, got: usize },
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error(
        "{solver} did not converge after {iterations} iterations (last residual {residual:.3e})"
    )]
    NoConvergence {
        solver: &'static str,
        iterations: usize,
        residual: f64,
        history: Vec<f64>,
    },
    #[error("stage {stage} (epsilon {epsilon:.3e}): {source}")]
    Stage {
        stage: usize,
        epsilon: f64,
        #[source]
        source: Box<Error>,
    },
    #[error("time slice {slice}: {source}")]
    Slice {
        slice: usize,
        #[source]
        source: Box<Error>,
    },
    #[error("monotonicity violated at iteration {iteration}: {detail}")]
    Monotonicity { iteration: usize, detail: String },
    #[error("oracle found no complementarity solution")]
    OracleFailed,
    #[error("infeasible control: {0}")]
    Infeasible(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("unknown scenario `{0}`")]
    UnknownScenario(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    /// True for failures of an iterative method, as opposed to bad input.
    pub fn is_convergence_failure(&self) -> bool {
        match self {
            Error::NoConvergence { .. } | Error::Monotonicity { .. } => true,
            Error::Stage { source, .. } | Error::Slice { source, .. } => {
                source.is_convergence_failure()
            }
            _ => false,
        }
    }

    /// Residual history of the innermost non-converged iteration.
    pub fn convergence_history(&self) -> Option<&[f64]> {
        match self {
            Error::NoConvergence { history, .. } => Some(history),
            Error::Stage { source, .. } | Error::Slice { source, .. } => {
                source.convergence_history()
            }
            _ => None,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
