use thiserror::Error;

/// Errors raised across the toolkit.
///
/// Variants are grouped by how the CLI reports them: input problems map to
/// exit code 2, numerical failures to exit code 3.
#[derive(Debug, Error)]
pub enum Error {
    #[error("empty scene")]
    EmptyScene,
    #[error("isolated interaction point")]
    IsolatedPoint,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("non-incident geometry (cos theta_i = {0})")]
    NonIncident(f64),
    #[error("ray leaves surface")]
    RayLeavesSurface,
    #[error("scatter into surface")]
    ScatterIntoSurface,
    #[error("degenerate cone: incident direction parallel to edge")]
    DegenerateCone,
    #[error("terminal embedded in geometry")]
    TerminalEmbedded,
    #[error("unknown material id {0}")]
    UnknownMaterial(u32),
    #[error("shape mismatch: {op} got {lhs:?} and {rhs:?}")]
    Shape {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    #[error("missing gradient for parameter `{0}`")]
    MissingGradient(String),
    #[error("non-finite loss at epoch {epoch}: {detail}")]
    NonFiniteLoss { epoch: usize, detail: String },
    #[error("empty dataset")]
    EmptyDataset,
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("schema error: {0}")]
    Schema(String),
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Stable process exit code for this error class.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::NonFiniteLoss { .. } => 3,
            _ => 2,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
