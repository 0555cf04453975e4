//! Deterministic numeric substrate.

mod adam;
mod fdiff;
mod mat;
mod rng;

pub use adam::{adam_step, AdamState};
pub use fdiff::{finite_diff_grad, DEFAULT_FD_STEP};
pub use mat::Mat;
pub use rng::{standard_normal, Rng};
