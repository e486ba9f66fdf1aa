//! Primitive triangulation, composite toy meshes and their file formats.

mod manifest;
mod mesh;
mod obj;
mod stl;

use std::path::Path;

use thiserror::Error;

pub use manifest::{
    read_manifest, sha256_hex, toy_stats, write_manifest, Manifest, ManifestConfig, ToyRecord, ToyStats,
    DEFAULT_CALIPER_DIRECTIONS, FORMAT_VERSION,
};
pub use mesh::{mesh_primitive, mesh_toy, mesh_volume, Aabb, Tessellation, TriMesh};
pub use obj::{export_obj, obj_string, parse_obj, read_obj};
pub use stl::{export_stl, export_stl_allow_empty, parse_stl, read_stl, stl_bytes, StlFacet};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MeshError {
    #[error("I/O failure on {path}: {message}")]
    IoFailure { path: String, message: String },
    #[error("mesh is not watertight")]
    NotWatertight,
    #[error("mesh has no triangles")]
    EmptyMesh,
    #[error("invalid mesh: {0}")]
    InvalidMesh(String),
    #[error("invalid tessellation: {0}")]
    InvalidTessellation(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("manifest schema violation: {0}")]
    SchemaViolation(String),
}

impl MeshError {
    pub(crate) fn io(path: &Path, e: std::io::Error) -> Self {
        MeshError::IoFailure { path: path.display().to_string(), message: e.to_string() }
    }
}
