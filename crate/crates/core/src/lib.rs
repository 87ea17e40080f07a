pub mod checks;
pub mod error;
pub mod experiment;
pub mod galerkin;
pub mod network;
pub mod polybasis;
pub mod problems;
pub mod sampler;
pub mod train;
pub mod loss;

pub use error::{Error, Result};
