//! JSON dataset manifest: a config echo plus one record per toy.
//!
//! Keys are emitted in struct-declaration order and floats in shortest
//! round-trip form, so identical inputs give identical bytes.

use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{mesh_toy, Aabb, MeshError, Tessellation};
use crate::analysis::min_caliper_width;
use crate::assembler::{Category, GenerationConfig, ToyColor, ToySpec};
use crate::primitives::PlacedPrimitive;

pub const FORMAT_VERSION: &str = "1";

/// Direction count used for the recorded caliper width.
pub const DEFAULT_CALIPER_DIRECTIONS: usize = 1024;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestConfig {
    pub generation: GenerationConfig,
    pub tessellation: Tessellation,
    pub caliper_directions: usize,
}

/// Derived geometry of one toy mesh.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToyStats {
    pub aabb: Aabb,
    /// Sum of analytic part volumes; overlapping regions count once per part.
    pub volume: f64,
    pub min_caliper_width: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToyRecord {
    pub id: String,
    pub seed: u64,
    pub category: Category,
    pub color: ToyColor,
    pub parts: Vec<PlacedPrimitive>,
    pub stats: ToyStats,
}

impl ToyRecord {
    pub fn toy(&self) -> ToySpec {
        ToySpec {
            id: self.id.clone(),
            seed: self.seed,
            category: self.category,
            color: self.color,
            parts: self.parts.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub format_version: String,
    pub config: ManifestConfig,
    pub toys: Vec<ToyRecord>,
}

pub fn toy_stats(toy: &ToySpec, tess: &Tessellation, caliper_directions: usize) -> Result<ToyStats, MeshError> {
    let mesh = mesh_toy(toy, tess);
    let aabb = mesh.aabb().ok_or(MeshError::EmptyMesh)?;
    let caliper = min_caliper_width(&mesh, caliper_directions).map_err(|e| MeshError::InvalidMesh(e.to_string()))?;
    Ok(ToyStats { aabb, volume: toy.parts.iter().map(|p| p.spec.volume()).sum(), min_caliper_width: caliper.width })
}

impl Manifest {
    pub fn build(toys: &[ToySpec], config: ManifestConfig) -> Result<Self, MeshError> {
        config.tessellation.validate()?;
        let records = toys
            .par_iter()
            .map(|t| {
                Ok(ToyRecord {
                    id: t.id.clone(),
                    seed: t.seed,
                    category: t.category,
                    color: t.color,
                    parts: t.parts.clone(),
                    stats: toy_stats(t, &config.tessellation, config.caliper_directions)?,
                })
            })
            .collect::<Result<Vec<_>, MeshError>>()?;
        Ok(Self { format_version: FORMAT_VERSION.to_string(), config, toys: records })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut v = serde_json::to_vec_pretty(self).expect("manifest serializes");
        v.push(b'\n');
        v
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, MeshError> {
        let value: serde_json::Value =
            serde_json::from_slice(bytes).map_err(|e| MeshError::SchemaViolation(format!("not JSON: {e}")))?;
        match value.get("format_version") {
            None => return Err(MeshError::SchemaViolation("missing format_version".into())),
            Some(serde_json::Value::String(v)) if v == FORMAT_VERSION => {}
            Some(other) => {
                return Err(MeshError::SchemaViolation(format!("unsupported format_version {other}")));
            }
        }
        serde_json::from_value(value).map_err(|e| MeshError::SchemaViolation(e.to_string()))
    }

    /// Lowercase hex SHA-256 of the serialized bytes.
    pub fn digest(&self) -> String {
        sha256_hex(&self.to_bytes())
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Builds the manifest for `toys` and writes it to `path`.
pub fn write_manifest(toys: &[ToySpec], config: ManifestConfig, path: &Path) -> Result<Manifest, MeshError> {
    let m = Manifest::build(toys, config)?;
    fs::write(path, m.to_bytes()).map_err(|e| MeshError::io(path, e))?;
    Ok(m)
}

pub fn read_manifest(path: &Path) -> Result<Manifest, MeshError> {
    let bytes = fs::read(path).map_err(|e| MeshError::io(path, e))?;
    Manifest::from_bytes(&bytes)
}
