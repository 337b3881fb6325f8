//! Detection of planar signals in noisy images through the largest cluster
//! of a thresholded image on the triangular lattice.

pub mod app;
pub mod cluster;
pub mod detect;
pub mod error;
pub mod lattice;
pub mod noise;
pub mod perclab;
pub mod pgm;
pub mod seed;

pub use error::{Error, Result};
