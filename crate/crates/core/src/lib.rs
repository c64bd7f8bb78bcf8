pub mod bath;
pub mod cli;
pub mod dynamics;
pub mod error;
pub mod landscape;
pub mod model;
pub mod povm;

pub use error::{Error, Result};
