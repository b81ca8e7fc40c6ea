//! Surprise-driven exploration for policy-gradient reinforcement learning.
//!
//! The crate is `no_std` (with `alloc`) and contains every pure algorithmic
//! piece: dense tanh networks with exact gradients and Gauss-Newton products,
//! distribution algebra, a single-step trust-region solver, a learned Gaussian
//! dynamics model with replay memory, intrinsic-reward schemes, the built-in
//! sparse-reward environments, and a TRPO training loop.
//!
//! IO, file formats, timing and the command-line runner live in the
//! `surprise-rl` crate.

#![no_std]
#![allow(clippy::neg_cmp_op_on_partial_ord)]
#![deny(rust_2018_idioms)]

extern crate alloc;

pub mod bonus;
pub mod dist;
pub mod dynamics;
pub mod envs;
mod error;
pub mod numkit;
pub mod rl;
pub mod trustregion;

pub use error::{Error, Result};
