//! Lattice confidence propagation for instance grouping.
//!
//! A coarse lattice over the image carries a five-way correlation field per
//! node. Propagating confidences along that field groups foreground nodes
//! around instance centres; greedy path search and Markov clustering are
//! cheaper or alternative ways to reach the same grouping.

pub mod bench;
pub mod cp;
pub mod error;
pub mod geometry;
pub mod gps;
pub mod io;
pub mod lattice;
pub mod learn;
pub mod mcl;
pub mod pipeline;
pub mod render;
pub mod synth;

pub use error::{Error, Result};

/// Library version, recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
