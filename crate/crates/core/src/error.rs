use std::path::PathBuf;

use thiserror::Error;

use crate::model::Facet;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{origin}:{line}: {message}")]
    Parse {
        origin: String,
        line: usize,
        message: String,
    },

    #[error("identifier is empty after normalization")]
    EmptyIdentifier,

    #[error("{origin}: no valid rows")]
    NoValidRows { origin: String },

    #[error("config key `{key}`: {message}")]
    Config { key: String, message: String },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("no score for ({subject}, {property}) on facet {facet}")]
    MissingScore {
        subject: String,
        property: String,
        facet: Facet,
    },

    #[error("unknown subject `{0}`")]
    UnknownSubject(String),

    #[error("solver defect: {0}")]
    Solver(String),

    #[error("{stage}: {inner}")]
    Stage {
        stage: &'static str,
        inner: Box<Error>,
    },
}

impl Error {
    /// True for configuration mistakes, looking through stage tags.
    pub fn is_config(&self) -> bool {
        match self {
            Error::Config { .. } => true,
            Error::Stage { inner, .. } => inner.is_config(),
            _ => false,
        }
    }

    pub fn in_stage(self, stage: &'static str) -> Self {
        match self {
            Error::Stage { .. } => self,
            e => Error::Stage {
                stage,
                inner: Box::new(e),
            },
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(origin: impl Into<String>, line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            origin: origin.into(),
            line,
            message: message.into(),
        }
    }

    pub(crate) fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            message: message.into(),
        }
    }
}
