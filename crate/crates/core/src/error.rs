use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("validation error: {0}")]
    Validation(String),

    #[error("bias undefined for activity `{activity}`: no gendered mass")]
    UndefinedBias { activity: String },

    #[error("no constrained activities")]
    NoConstrainedActivities,

    #[error("degenerate distribution for instance `{instance}`: all support has zero mass")]
    Degenerate { instance: String },

    #[error("infinite divergence at instance `{instance}`, candidate {candidate}")]
    InfiniteDivergence { instance: String, candidate: usize },

    #[error("solver failure at step {step}, coordinate {coordinate}: {message}")]
    Solver { step: u64, coordinate: usize, message: String },

    #[error("size refusal: {0}")]
    SizeRefusal(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit code for the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Solver { .. } => 2,
            Error::SizeRefusal(_) => 3,
            _ => 1,
        }
    }
}
