pub mod cvss;
pub mod dataset;
pub mod error;
pub mod evaluation;
pub mod extraction;
pub mod filters;
pub mod inference;
pub mod ingestion;
pub mod model;
pub mod pipeline;
pub mod prompting;

pub use error::{Error, Result};
