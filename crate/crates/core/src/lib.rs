pub mod config;
pub mod data;
pub mod domain;
pub mod error;
pub mod eval;
pub mod fusion;
pub mod gradcheck;
pub mod mask_head;
pub mod model;
pub mod nn;
pub mod prior;
pub mod tensor;
pub mod training;

pub use config::ModelConfig;
pub use error::{Error, Result};
pub use model::MbaNet;
