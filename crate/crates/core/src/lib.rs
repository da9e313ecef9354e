pub mod codec;
pub mod data;
pub mod env;
pub mod error;
pub mod eval;
pub mod experiment;
pub mod gating;
pub mod grammar;
pub mod hash;
pub mod model;
pub mod trainer;
pub mod vocab;

pub use error::{Error, Result};
