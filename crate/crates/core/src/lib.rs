//! State-aware noisy exploration for deep Q-learning.
//!
//! This crate is `no_std` (it needs `alloc`) and contains every numeric piece
//! of the workbench: a small dense-matrix substrate with a seeded generator,
//! Q-networks with hand-derived backward passes, the NoisyNet and SANE noise
//! machinery, a DQN agent, tabular environments with explicit risk structure,
//! and the variational diagnostics. File formats and the command line live in
//! the `sanex` crate.
//!
//! Transcendental functions go through [`libm`] so every run is bit-exact
//! across platforms for a given seed.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod agent;
pub mod diagnostics;
pub mod envs;
mod error;
pub mod nncore;
pub mod noisy;
pub mod numkit;

pub use error::{Error, Result};
