use thiserror::Error;

use crate::parser::SourceSpan;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("{span}: {message}")]
    Parse { span: SourceSpan, message: String },

    #[error("invalid program: {0}")]
    InvalidProgram(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("grounding error: {0}")]
    Grounding(String),

    #[error("resource limit exceeded: {0}")]
    Resource(String),

    #[error("semantic error: {0}")]
    Semantic(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("usage error: {0}")]
    Usage(String),

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("name collision: predicate `{0}` already occurs in the program")]
    NameCollision(String),

    #[error("program is not tight: positive cycle {}", .0.join(" -> "))]
    NotTight(Vec<String>),

    #[error("degenerate counts for `{atom}`: {true_count} true and {false_count} false instances")]
    DegenerateCount {
        atom: String,
        true_count: usize,
        false_count: usize,
    },
}

impl Error {
    pub(crate) fn no_stable_model() -> Self {
        Error::Semantic("no probabilistic stable model".into())
    }

    pub(crate) fn zero_probability() -> Self {
        Error::Data("observation has zero probability".into())
    }
}
