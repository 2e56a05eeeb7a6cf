pub mod analysis;
pub mod error;
pub mod harnack;
pub mod harness;
pub mod segment;
pub mod simulator;
pub mod zvonkin;

pub use error::{Error, Result};
