pub mod corpus;
pub mod detection;
pub mod error;
pub mod evaluation;
pub mod identification;
pub mod mlm;
pub mod pipeline;
pub mod synth;
pub mod vocab;

pub use error::{Error, Result};
