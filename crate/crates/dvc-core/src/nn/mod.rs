//! Minimal reverse-mode differentiation engine sized for desk-scale gated
//! convolution networks, plus the Adam optimizer and the learning-rate /
//! identity-loss schedules used by the training loop.
//!
//! Training runs in `f32`; gradient verification instantiates the same tape
//! in `f64` against central finite differences.

mod adam;
pub mod gradcheck;
mod schedule;
mod tape;

pub use adam::{adam_step, AdamState};
pub use schedule::{lr_at, LrSchedule, NetSide};
pub use tape::{Real, Tape, Tensor, TensorId};
