//! Joint CNN/transformer sentence encoders with domain adversarial training
//! for suggestion mining.

pub mod adversarial;
pub mod cli;
pub mod encoders;
pub mod error;
pub mod evaluation;
pub mod model;
pub mod tensor;
pub mod text;
pub mod training;

pub use error::{Error, Result};
