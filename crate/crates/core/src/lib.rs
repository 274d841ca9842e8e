//! Coordinated downlink beamforming across a cluster of LEO satellites.
//!
//! The crate covers the whole simulation pipeline:
//!
//! - [`channel`]: Shadowed-Rician satellite-to-ground channels with a
//!   Bessel-pattern beam gain and free-space path loss.
//! - [`beamform`]: the weighted-sum-rate objective and the MRT / ZF / MMSE
//!   baselines with local or global channel knowledge.
//! - [`gnn`]: the per-satellite graph neural network that maps local channels
//!   to beamformers.
//! - [`train`]: centralized unsupervised training of the tied multi-GNN with
//!   hand-written reverse-mode gradients and Adam.
//! - [`accel`]: a behavioral fixed-point systolic-array accelerator with
//!   memory-bound latency accounting.
//! - [`experiment`]: configuration and CSV/SVG artifact generation.

// `!(x > 0.0)` also rejects NaN, which is the point.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod accel;
pub mod beamform;
pub mod channel;
pub mod error;
pub mod experiment;
pub mod gnn;
pub mod rng;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use num_complex::Complex64;
pub use tensor::CTensor3;
