//! Tracking costs, adjoint gradients and descent over admissible controls.

pub mod adjoint;
pub mod cost;
pub mod field;
pub mod optimize;
