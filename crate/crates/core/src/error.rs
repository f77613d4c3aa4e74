use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("parameter mismatch: {0}")]
    ParamMismatch(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("{what} budget exceeded (limit {limit})")]
    Budget { what: &'static str, limit: usize },

    #[error("word `{0}` has no value in the supplied trace")]
    MissingWord(String),

    #[error("invalid permutation action: {0}")]
    InvalidAction(String),

    #[error("strategy is not normalized: {0}")]
    NotNormalized(String),

    #[error("matrix has non-integer coefficient {0}")]
    NonInteger(String),

    #[error("degree cap {cap} is insufficient for accuracy {target}; estimated minimal degree {estimate}")]
    DegreeCap {
        cap: usize,
        target: String,
        estimate: usize,
    },

    #[error("certification failed at t = {node}: {reason}")]
    Certification { node: String, reason: String },

    #[error("sets are not nested: {0}")]
    NotNested(String),

    #[error("linear program is infeasible: {0}")]
    Infeasible(String),

    #[error("linear program is unbounded")]
    Unbounded,

    #[error("simplex iteration limit {0} reached")]
    IterationLimit(usize),

    #[error("verification failed: {0}")]
    Verification(String),

    #[error("internal error: {0}")]
    Internal(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn parse(line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            line,
            msg: msg.into(),
        }
    }
}
