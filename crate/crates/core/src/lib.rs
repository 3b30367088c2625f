//! Compressive read-out and reconstruction for four-phase time-of-flight cameras.
//!
//! Each phase-difference image is measured through a block-diagonal matrix of
//! partial circulant blocks, reconstructed with an l1 (Haar) or TV solver,
//! and converted to depth with the four-phase formula.

pub mod error;
pub mod image;
pub mod io;
pub mod linop;
pub mod phantom;
pub mod pipeline;
pub mod rng;
pub mod sensing;
pub mod solvers;
pub mod tof;
pub mod transforms;

pub use error::{Error, Result};
pub use image::Image;
pub use linop::LinearOperator;
pub use sensing::{CirculantBlockSpec, Layout, SensingMatrix};
pub use solvers::{Method, SolverSettings};
