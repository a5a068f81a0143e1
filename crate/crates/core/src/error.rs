use thiserror::Error;

use crate::networks::EnsembleModel;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {op}: {detail}")]
    Shape { op: &'static str, detail: String },

    #[error("non-finite value produced by {0}")]
    NonFinite(&'static str),

    #[error("domain error in {op}: {detail}")]
    Domain { op: &'static str, detail: String },

    #[error("contract violated: {0}")]
    Contract(String),

    #[error("components {a} and {b} are not separated (distance {distance:e})")]
    Overlap { a: usize, b: usize, distance: f64 },

    #[error("class {0} has no samples")]
    EmptyClass(usize),

    #[error("training diverged at epoch {epoch}: loss {loss}")]
    Diverged {
        epoch: usize,
        loss: f64,
        /// Last checkpoint recorded before the divergence, if any.
        last_good: Option<Box<(usize, EnsembleModel)>>,
    },

    #[error("only {found} of {target} latent draws accepted after {draws} attempts")]
    Shortfall {
        found: usize,
        target: usize,
        draws: usize,
        accepted: Vec<[f64; 2]>,
    },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Shape {
            op,
            detail: detail.into(),
        }
    }

    pub(crate) fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }

    pub(crate) fn parse(msg: impl Into<String>) -> Self {
        Error::Parse(msg.into())
    }
}
