//! Simulation-side building blocks: seeded random streams, Levy noise samplers,
//! Euler-Maruyama simulation of Ornstein-Uhlenbeck paths, the binary dataset
//! container, and the classical estimators used as baselines.

pub mod baselines;
pub mod dataset_io;
pub mod error;
pub mod family;
pub mod nelder_mead;
pub mod noise;
pub mod rng;
pub mod sim;
pub mod stats;

pub use error::{Error, Result};
pub use family::{NoiseFamily, ParamVector, Range, SdeFamily};
pub use noise::NoiseKind;
pub use rng::SeededRng;
pub use sim::{Dataset, DatasetRecord, Trajectory, X0Policy};
