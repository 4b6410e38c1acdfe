// Negated comparisons are used on purpose: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod distribution;
pub mod divergence;
pub mod encoding;
pub mod error;
pub mod exec;
pub mod grid;
pub mod io;
pub mod metrics;
pub mod render;
pub mod rotation;
pub mod shape;
pub mod surrogate;

pub use error::{Error, Result};
pub use rotation::{Rotation, RotationMatrix, Vec3};
