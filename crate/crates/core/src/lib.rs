//! Semi-supervised short text clustering.

pub mod error;
pub mod tensor_autodiff;
pub mod text;
pub mod encoders;
pub mod assignment;
pub mod metrics;
pub mod clustering;
pub mod harness;

pub use error::{Error, Result};
