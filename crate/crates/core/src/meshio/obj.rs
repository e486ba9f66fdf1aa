//! ASCII OBJ with one `g part_<k>` group per part label. Coordinates use the
//! shortest decimal form that round-trips the f64 exactly.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::{MeshError, TriMesh};
use crate::primitives::Vec3;

pub fn obj_string(mesh: &TriMesh) -> String {
    let mut s = String::with_capacity(40 * (mesh.vertices.len() + mesh.triangles.len()));
    s.push_str("# cezanne toy mesh (meters)\n");
    for v in &mesh.vertices {
        let _ = writeln!(s, "v {} {} {}", v.x, v.y, v.z);
    }
    let mut current: Option<u32> = None;
    for (t, tri) in mesh.triangles.iter().enumerate() {
        let label = mesh.part_labels.as_ref().map_or(0, |l| l[t]);
        if current != Some(label) {
            let _ = writeln!(s, "g part_{label}");
            current = Some(label);
        }
        let _ = writeln!(s, "f {} {} {}", tri[0] + 1, tri[1] + 1, tri[2] + 1);
    }
    s
}

pub fn export_obj(mesh: &TriMesh, path: &Path) -> Result<(), MeshError> {
    if mesh.is_empty() {
        return Err(MeshError::EmptyMesh);
    }
    fs::write(path, obj_string(mesh)).map_err(|e| MeshError::io(path, e))
}

/// Parses the subset of OBJ written by [`obj_string`]: `v`, triangular `f`
/// and `g part_<k>` lines. Part labels are set whenever a group is present.
pub fn parse_obj(text: &str) -> Result<TriMesh, MeshError> {
    let mut mesh = TriMesh::default();
    let mut labels = Vec::new();
    let mut label: Option<u32> = None;
    for (ln, line) in text.lines().enumerate() {
        let err = |m: &str| MeshError::Parse(format!("line {}: {m}", ln + 1));
        let mut it = line.split_whitespace();
        match it.next() {
            Some("v") => {
                let c: Vec<f64> = it.map(str::parse).collect::<Result<_, _>>().map_err(|_| err("bad vertex"))?;
                if c.len() != 3 {
                    return Err(err("vertex needs 3 coordinates"));
                }
                mesh.vertices.push(Vec3::new(c[0], c[1], c[2]));
            }
            Some("f") => {
                let idx: Vec<u32> = it
                    .map(|tok| tok.split('/').next().unwrap_or("").parse::<u32>())
                    .collect::<Result<_, _>>()
                    .map_err(|_| err("bad face index"))?;
                if idx.len() != 3 || idx.contains(&0) {
                    return Err(err("only 1-based triangles are supported"));
                }
                mesh.triangles.push([idx[0] - 1, idx[1] - 1, idx[2] - 1]);
                labels.push(label.unwrap_or(0));
            }
            Some("g") => {
                let name = it.next().ok_or_else(|| err("unnamed group"))?;
                let k = name.strip_prefix("part_").and_then(|k| k.parse().ok()).ok_or_else(|| err("group is not part_<k>"))?;
                label = Some(k);
            }
            _ => {}
        }
    }
    if label.is_some() {
        mesh.part_labels = Some(labels);
    }
    Ok(mesh)
}

pub fn read_obj(path: &Path) -> Result<TriMesh, MeshError> {
    let text = fs::read_to_string(path).map_err(|e| MeshError::io(path, e))?;
    parse_obj(&text)
}
