//! Neural estimation of drift, scale and noise-shape parameters of Lévy-driven
//! Ornstein-Uhlenbeck processes from a single discretely observed path.

pub mod baseline;
pub mod bench;
pub mod config;
pub mod error;
pub mod evaluate;
pub mod model;
pub mod train;

pub use config::{Architecture, InputMode, PEnetConfig, TrainConfig};
pub use error::{Error, Result};
pub use model::{Mode, PEnetModel};
