//! Procedural composite toys built from four shape primitives, their meshes
//! and file formats, grasp and print feasibility analysis, a small
//! object-centric vision transformer with detection pooling, a behavior
//! cloning policy, and evaluation trial schedules.

pub mod analysis;
pub mod assembler;
pub mod detpool;
pub mod evalharness;
pub mod meshio;
pub mod nn;
pub mod policy;
pub mod primitives;
pub mod rng;
