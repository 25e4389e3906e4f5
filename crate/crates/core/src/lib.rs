pub mod cli;
pub mod corpus;
pub mod error;
pub mod evaluation;
pub mod inference;
pub mod labeler;
pub mod model;
pub mod pipeline;
pub mod serializer;
pub mod synth;
pub mod training;

pub use error::{JetError, Result};
