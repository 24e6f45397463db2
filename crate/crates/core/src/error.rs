use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("unknown model `{0}`")]
    UnknownModel(String),

    #[error("model {model} requires constant `{name}`")]
    MissingConstant { model: &'static str, name: &'static str },

    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("singular linear system in {context} (pivot ratio {pivot_ratio:.3e})")]
    SingularSystem {
        context: &'static str,
        pivot_ratio: f64,
    },

    #[error("{context}: needs at least {needed} time levels, got {got}")]
    TooFewColumns {
        context: &'static str,
        needed: usize,
        got: usize,
    },

    #[error("reduced dimension r={r} outside 1..={max}")]
    RankOutOfRange { r: usize, max: usize },

    #[error("final time {t_final} is not an integer multiple of dt={dt}")]
    NonIntegerSteps { t_final: f64, dt: f64 },

    #[error("non-finite loss at epoch {epoch}: {loss}")]
    NonFiniteLoss { epoch: usize, loss: f64 },

    #[error("reference energy is zero at index {index}")]
    ZeroReference { index: usize },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("malformed input: {0}")]
    Format(String),

    #[error("non-finite values in {0}")]
    NonFinite(&'static str),

    #[error("stage {stage} failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Configuration and input problems map to 2, numerical failures to 3.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Stage { source, .. } => source.exit_code(),
            Error::UnknownModel(_)
            | Error::MissingConstant { .. }
            | Error::InvalidGrid(_)
            | Error::NonIntegerSteps { .. }
            | Error::RankOutOfRange { .. }
            | Error::Config(_)
            | Error::Format(_)
            | Error::Io(_)
            | Error::Json(_) => 2,
            _ => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
