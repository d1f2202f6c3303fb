pub mod config;
pub mod error;
pub mod eval;
pub mod grounding;
pub mod ingest;
pub mod lp;
pub mod model;
pub mod partition;
pub mod pipeline;
pub mod priors;
pub mod similarity;

pub use error::{Error, Result};
