//! Minimal reverse-mode autodiff stack.
//!
//! A [`Tape`](tape::Tape) records the forward computation; calling
//! [`backward`](tape::Tape::backward) walks it in reverse and accumulates
//! gradients. All math is f64; checkpoint files store f32 payloads.
//! Exactly the layers the three networks need are provided — no more.

pub mod checkpoint;
pub mod gradcheck;
pub mod init;
pub mod optim;
pub mod params;
pub mod tape;

pub use params::{ParamSet, Parameter};
pub use tape::{Session, Tape, TensorId};
