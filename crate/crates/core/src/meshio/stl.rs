//! Binary STL: 80-byte header, little-endian u32 triangle count, then one
//! 50-byte record per triangle (normal, three vertices as f32, u16 attribute).

use std::fs;
use std::path::Path;

use super::{MeshError, TriMesh};

const HEADER: &[u8] = b"cezanne binary STL";

/// Encodes a mesh. Empty meshes are an error unless `allow_empty` is set,
/// in which case an 84-byte zero-triangle file is produced.
pub fn stl_bytes(mesh: &TriMesh, allow_empty: bool) -> Result<Vec<u8>, MeshError> {
    if mesh.is_empty() && !allow_empty {
        return Err(MeshError::EmptyMesh);
    }
    let count = u32::try_from(mesh.triangles.len())
        .map_err(|_| MeshError::InvalidMesh("too many triangles for STL".into()))?;
    let mut out = Vec::with_capacity(84 + 50 * mesh.triangles.len());
    let mut header = [0u8; 80];
    header[..HEADER.len()].copy_from_slice(HEADER);
    out.extend_from_slice(&header);
    out.extend_from_slice(&count.to_le_bytes());
    for t in 0..mesh.triangles.len() {
        let [a, b, c] = mesh.triangle(t);
        let n = (b - a).cross(&(c - a));
        let n = if n.norm() > 0.0 { n.normalize() } else { n };
        for v in [n, a, b, c] {
            for k in 0..3 {
                out.extend_from_slice(&(v[k] as f32).to_le_bytes());
            }
        }
        out.extend_from_slice(&0u16.to_le_bytes());
    }
    Ok(out)
}

pub fn export_stl(mesh: &TriMesh, path: &Path) -> Result<(), MeshError> {
    let bytes = stl_bytes(mesh, false)?;
    fs::write(path, bytes).map_err(|e| MeshError::io(path, e))
}

pub fn export_stl_allow_empty(mesh: &TriMesh, path: &Path) -> Result<(), MeshError> {
    let bytes = stl_bytes(mesh, true)?;
    fs::write(path, bytes).map_err(|e| MeshError::io(path, e))
}

/// A triangle as stored in STL: facet normal and three vertices.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StlFacet {
    pub normal: [f32; 3],
    pub vertices: [[f32; 3]; 3],
}

pub fn parse_stl(bytes: &[u8]) -> Result<Vec<StlFacet>, MeshError> {
    if bytes.len() < 84 {
        return Err(MeshError::Parse("STL shorter than its 84-byte preamble".into()));
    }
    let count = u32::from_le_bytes(bytes[80..84].try_into().unwrap()) as usize;
    if bytes.len() != 84 + 50 * count {
        return Err(MeshError::Parse(format!(
            "STL declares {count} triangles but has {} bytes",
            bytes.len()
        )));
    }
    let f = |o: usize| f32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
    Ok((0..count)
        .map(|i| {
            let base = 84 + 50 * i;
            let v = |k: usize| [f(base + 12 * k), f(base + 12 * k + 4), f(base + 12 * k + 8)];
            StlFacet { normal: v(0), vertices: [v(1), v(2), v(3)] }
        })
        .collect())
}

pub fn read_stl(path: &Path) -> Result<Vec<StlFacet>, MeshError> {
    let bytes = fs::read(path).map_err(|e| MeshError::io(path, e))?;
    parse_stl(&bytes)
}
