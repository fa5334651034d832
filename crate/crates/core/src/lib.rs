pub mod checkpoint;
pub mod cli;
pub mod data;
pub mod error;
pub mod layers;
pub mod metrics;
pub mod netspec;
pub mod network;
pub mod tensor;
pub mod trainer;
pub mod transfer;
pub mod video;

pub use error::{Error, Result};
pub use tensor::{Reduce, Tensor};
