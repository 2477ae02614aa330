pub mod autodiff;
pub mod cli;
pub mod config;
pub mod data;
pub mod decode;
pub mod error;
pub mod eval;
pub mod model;
pub mod nn;
pub mod rng;
pub mod synth;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
