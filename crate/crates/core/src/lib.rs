//! Near-field hashing multi-arm beam training.
//!
//! The crate is organized bottom-up:
//!
//! - [`geometry`]: planar-array geometry, distances, steering vectors and LoS channels.
//! - [`fresnel`] and [`codebook`]: the polar-domain single-beam codebook.
//! - [`hashing`]: per-round equal-occupancy bucket partitions of the codeword universe.
//! - [`multiarm`]: multi-arm beam synthesis, radiation patterns and phase optimization.
//! - [`training`]: scan, soft/hard demultiplexing, voting and the baseline trainers.
//! - [`experiment`] and [`config`]: Monte Carlo sweeps, CSV output and config files.

pub mod codebook;
pub mod config;
pub mod error;
pub mod experiment;
pub mod fresnel;
pub mod geometry;
pub mod hashing;
pub mod multiarm;
pub mod training;

pub use error::{Error, Result};
