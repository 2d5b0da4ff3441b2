//! Adaptive-degree RBF-FD discretisation of Poisson problems on rectangles.

pub mod assembly;
pub mod error;
pub mod geometry;
pub mod kernels;
pub mod linalg;
pub mod problems;
pub mod runner;
pub mod solver;
pub mod weights;

pub use error::{Error, Result};
