//! Dense-tensor computation with reverse-mode differentiation, the Adam
//! optimizer, a finite-difference gradient checker, and the checkpoint
//! format. Everything trainable in the toolkit runs on this substrate.

pub mod adam;
pub mod checkpoint;
pub mod gradcheck;
pub mod lstm;
pub mod params;
pub mod tape;
pub mod tensor;

pub use adam::AdamState;
pub use gradcheck::grad_check;
pub use lstm::LstmCell;
pub use params::{ParamMap, ParamSet};
pub use tape::{Gradients, NodeId, Tape};
pub use tensor::Tensor;
