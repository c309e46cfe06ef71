pub mod checkpoint;
pub mod data;
pub mod dst;
pub mod encoders;
pub mod error;
pub mod eval;
pub mod lu;
pub mod model;
pub mod repl;
pub mod tensor;
pub mod training;

pub use error::{Error, Result};
