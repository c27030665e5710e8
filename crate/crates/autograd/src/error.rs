use thiserror::Error;

/// Shape or argument mismatch detected while building a graph.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{op}: {msg}")]
pub struct ShapeError {
    pub op: &'static str,
    pub msg: String,
}

impl ShapeError {
    pub fn new(op: &'static str, msg: impl Into<String>) -> Self {
        Self {
            op,
            msg: msg.into(),
        }
    }
}
