//! Minimal reverse-mode automatic differentiation over dense `f64` tensors.
//!
//! Sequence tensors use the `(batch, length, channels)` layout. Ops are coarse: a
//! whole LSTM layer or convolution is one tape node with a hand-written backward.

pub mod adam;
pub mod check;
pub mod checkpoint;
mod error;
mod gemm;
pub mod ops;
pub mod tape;
pub mod tensor;

pub use adam::{clip_grad_norm, Adam};
pub use checkpoint::Checkpoint;
pub use error::{Error, Result};
pub use ops::{pooled_len, BatchStats};
pub use tape::{Tape, Var};
pub use tensor::Tensor;
