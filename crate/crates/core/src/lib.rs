//! Watertight surface reconstruction from sparse point clouds.
//!
//! A sparse cloud is densified by a learned sphere parameterization
//! ([`bsp`]), and a signed-distance network drives a deformable tetrahedral
//! grid whose extracted surface is fit to the densified cloud ([`gdo`]).
//! [`pipeline`] trains both jointly and evaluates the result.

pub mod bsp;
pub mod error;
pub mod gdo;
pub mod geometry;
pub mod io;
pub mod pipeline;
pub mod suite;
pub mod tensor;

pub use error::{Error, Result};
pub use geometry::{PointCloud, TriangleMesh};
pub use tensor::{Tape, Tensor, Var};
