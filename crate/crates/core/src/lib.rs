pub mod balance;
pub mod cli;
pub mod data;
pub mod embedding;
pub mod error;
pub mod evalx;
pub mod ising;
pub mod pegasus;
pub mod qrbm;
pub mod rbm;
pub mod samplers;
pub mod seed;

pub use error::{Error, Result};
