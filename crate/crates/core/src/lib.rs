pub mod baselines;
pub mod channel;
pub mod cli;
pub mod error;
pub mod io;
pub mod lattice;
pub mod nested;
pub mod polar;
pub mod quantizer;
pub mod rng;

pub use error::{Error, Result};
