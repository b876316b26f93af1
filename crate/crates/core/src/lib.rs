//! Per-attribute partial differential privacy.
//!
//! A mechanism is ∇DP for a metric `ε(x, x′)` on records when changing one
//! row from `x` to `x′` moves every output probability by at most a factor of
//! `e^{ε(x, x′)}`. The per-attribute case `ε0 · ‖x − x′‖₀` charges only for the
//! attributes that change. This crate provides the accountant, noise
//! primitives, the workload-answering and histogram-based mechanisms built on
//! them, and brute-force oracles used to check every mechanism.

pub mod accountant;
pub mod data;
pub mod error;
pub mod halfspace;
pub mod histogram;
pub mod mechanisms;
pub mod oracle;
pub mod release;
pub mod rng;
pub mod workloads;

pub use data::{AttributeSchema, Dataset, LabeledDataset, LabeledRow, Record};
pub use error::{Error, Result};
pub use mechanisms::NoiseConfig;
pub use rng::RngStream;
