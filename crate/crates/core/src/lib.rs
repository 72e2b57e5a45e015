//! Answer-guided knowledge retrieval and answer validation for
//! knowledge-based visual question answering.

pub mod autodiff;
pub mod candidates;
pub mod embedding;
pub mod error;
mod ids;
pub mod model;
pub mod nn;
pub mod pipeline;
pub mod query;
pub mod retrieval;
pub mod tensor;
pub mod text;
pub mod training;
pub mod validation;

pub use error::{Error, Result};
