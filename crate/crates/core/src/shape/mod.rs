//! Exact geometric oracles standing in for learned shape and feature networks.

pub mod mesh;
pub mod model;
pub mod primitive;
pub mod symmetry;

pub use mesh::TriangleMesh;
pub use model::{FeatureTable, Geometry, Marker, ShapeModel, FEATURE_DIM, PRESETS};
pub use primitive::Primitive;
pub use symmetry::{finite_rotation_group, GroupName, SymmetrySpec};
