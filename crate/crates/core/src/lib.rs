pub mod cli;
pub mod config;
pub mod data;
pub mod error;
pub mod eval;
pub mod federation;
pub mod nn;
pub mod pool;
pub mod report;
pub mod seed;

pub use error::{Error, ErrorKind, Result};
