pub mod amr;
pub mod autograd;
pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod corpus;
pub mod error;
pub mod eval;
pub mod event;
pub mod nn;
pub mod optim;
pub mod pipeline;
pub mod scorer;
pub mod stf;
pub mod tensor;

pub use error::{Error, Result};
