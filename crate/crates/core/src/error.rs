use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("degenerate environment: {0}")]
    Degenerate(String),

    #[error("site {0:?} is not in the cluster")]
    NotInCluster(Vec<i64>),

    #[error("geometry error: {0}")]
    Geometry(String),

    #[error("solver did not converge after {iterations} iterations (relative residual {residual:.3e})")]
    Solver { iterations: usize, residual: f64 },

    #[error("numerical error: {0}")]
    Numerical(String),

    #[error("interior of size {size} exceeds the dense cap {cap}; solve columns individually instead")]
    Size { size: usize, cap: usize },

    #[error("singular evaluation: {0}")]
    Singularity(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("scale error: {0}")]
    Scale(String),

    #[error("accuracy error: {0}")]
    Accuracy(String),

    #[error("dynamics error: {0}")]
    Dynamics(String),

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Process exit code used by the command line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Solver { .. } | Error::Numerical(_) | Error::Accuracy(_) => 3,
            Error::Degenerate(_) | Error::Dynamics(_) => 4,
            Error::Io(_) => 1,
            _ => 2,
        }
    }
}

pub(crate) fn param<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Parameter(msg.into()))
}
