pub mod backend;
pub mod corpus;
pub mod decode;
pub mod error;
pub mod harness;
pub mod metrics;
pub mod model;
pub mod prompts;
pub mod synth;
pub mod taskgen;

pub use error::{Error, Result};
