use std::path::PathBuf;

use thiserror::Error;

/// Errors produced while generating nodes, computing stencil weights or
/// assembling operators.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("capacity exceeded: {0}")]
    Capacity(String),

    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),

    #[error("stencil is not unisolvent for degree {degree} (rank {rank} < {size})")]
    Unisolvent {
        degree: usize,
        rank: usize,
        size: usize,
    },

    #[error("stencil has {points} points but degree {degree} needs more than {required}")]
    StencilTooSmall {
        points: usize,
        required: usize,
        degree: usize,
    },

    #[error("node {node}: {source}")]
    Node {
        node: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("internal error: {0}")]
    Internal(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn arg(msg: impl Into<String>) -> Self {
        Error::Argument(msg.into())
    }

    pub(crate) fn at_node(self, node: usize) -> Self {
        match self {
            e @ Error::Node { .. } => e,
            e => Error::Node {
                node,
                source: Box::new(e),
            },
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures that a larger stencil radius can fix.
    pub fn is_stencil_failure(&self) -> bool {
        match self {
            Error::Unisolvent { .. } | Error::StencilTooSmall { .. } => true,
            Error::Node { source, .. } => source.is_stencil_failure(),
            _ => false,
        }
    }
}
