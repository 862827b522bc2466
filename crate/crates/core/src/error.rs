use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("label space needs between 2 and 64 labels, got {0}")]
    InvalidLabelSpace(usize),

    #[error("instance {instance} has an empty admissible set")]
    EmptyAdmissibleSet { instance: usize },

    #[error("label {label} is outside 0..{count}")]
    LabelOutOfRange { label: usize, count: usize },

    #[error("unknown instance id {id} (map covers {len} instances)")]
    UnknownInstance { id: usize, len: usize },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid weights: {0}")]
    InvalidWeights(String),

    #[error("non-finite score {value} for label {label}")]
    InvalidScore { label: usize, value: f64 },

    #[error("empty {0} split")]
    EmptySplit(&'static str),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("construction error: {0}")]
    Construction(String),

    #[error("infeasible: {0}")]
    Feasibility(String),

    #[error("unsupported family: {0}")]
    Descriptor(String),

    #[error("optimization failed: {message}")]
    Optimization {
        message: String,
        trace: Vec<(usize, f64)>,
    },

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn parse(line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            line,
            message: message.into(),
        }
    }
}
