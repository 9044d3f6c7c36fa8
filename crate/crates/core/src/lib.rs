//! Numerical laboratory for the volume-preserving fractional mean curvature flow.

pub mod conv;
pub mod deform;
pub mod error;
pub mod flow;
pub mod grid;
pub mod kernel;
pub mod maxflow;
pub mod quadrature;
pub mod special;
pub mod step;

pub use error::{Error, Result};
