//! Core algorithms for the similarity-entailed unlearning benchmark.
//!
//! Everything in this crate is pure computation over `alloc` types: dataset
//! construction, similarity metrics, small differentiable models, the
//! unlearning procedures, and the verification suite. File formats, the CLI,
//! and experiment orchestration live in the companion `lethe-cli` crate.
//!
//! The crate is `no_std` (with `alloc`); all randomness flows through
//! explicitly seeded streams so that every result is reproducible from
//! `(inputs, config, seed)`.

#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod data;
pub mod graph;
pub mod metrics;
pub mod model;
pub mod rng;
pub mod tensor;
pub mod unlearn;
pub mod verify;

mod error;

pub use error::{Error, Result};
