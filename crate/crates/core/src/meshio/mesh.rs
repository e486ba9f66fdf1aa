use std::collections::HashMap;
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::MeshError;
use crate::assembler::ToySpec;
use crate::primitives::{Pose, PrimitiveSpec, Vec3};

/// Indexed triangle mesh in meters.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TriMesh {
    pub vertices: Vec<Vec3>,
    pub triangles: Vec<[u32; 3]>,
    /// Per-triangle part index for composite meshes.
    pub part_labels: Option<Vec<u32>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tessellation {
    pub sphere_subdivisions: u32,
    pub radial_segments: u32,
}

impl Default for Tessellation {
    fn default() -> Self {
        Self { sphere_subdivisions: 3, radial_segments: 64 }
    }
}

impl Tessellation {
    pub fn validate(&self) -> Result<(), MeshError> {
        if self.radial_segments < 8 {
            return Err(MeshError::InvalidTessellation(format!(
                "radial_segments = {} (need at least 8)",
                self.radial_segments
            )));
        }
        if self.sphere_subdivisions > 7 {
            return Err(MeshError::InvalidTessellation(format!(
                "sphere_subdivisions = {} (at most 7 supported)",
                self.sphere_subdivisions
            )));
        }
        Ok(())
    }
}

/// Axis-aligned bounding box.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aabb {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

impl Aabb {
    pub fn extents(&self) -> [f64; 3] {
        [self.max[0] - self.min[0], self.max[1] - self.min[1], self.max[2] - self.min[2]]
    }

    pub fn max_extent(&self) -> f64 {
        let e = self.extents();
        e[0].max(e[1]).max(e[2])
    }
}

impl TriMesh {
    pub fn is_empty(&self) -> bool {
        self.triangles.is_empty()
    }

    pub fn triangle(&self, t: usize) -> [Vec3; 3] {
        let [a, b, c] = self.triangles[t];
        [self.vertices[a as usize], self.vertices[b as usize], self.vertices[c as usize]]
    }

    pub fn aabb(&self) -> Option<Aabb> {
        let first = self.vertices.first()?;
        let mut min = [first.x, first.y, first.z];
        let mut max = min;
        for v in &self.vertices {
            for i in 0..3 {
                min[i] = min[i].min(v[i]);
                max[i] = max[i].max(v[i]);
            }
        }
        Some(Aabb { min, max })
    }

    /// Checks index bounds, label length and triangle non-degeneracy.
    pub fn validate(&self) -> Result<(), MeshError> {
        let n = self.vertices.len() as u32;
        for (t, tri) in self.triangles.iter().enumerate() {
            if tri.iter().any(|&i| i >= n) {
                return Err(MeshError::InvalidMesh(format!("triangle {t} indexes past {n} vertices")));
            }
            let [a, b, c] = self.triangle(t);
            if 0.5 * (b - a).cross(&(c - a)).norm() <= 1e-15 {
                return Err(MeshError::InvalidMesh(format!("triangle {t} is degenerate")));
            }
        }
        if let Some(labels) = &self.part_labels {
            if labels.len() != self.triangles.len() {
                return Err(MeshError::InvalidMesh("part_labels length differs from triangle count".into()));
            }
        }
        Ok(())
    }

    /// Every undirected edge is shared by exactly two triangles.
    pub fn is_watertight(&self) -> bool {
        edge_counts(&self.triangles).values().all(|&(fwd, back)| fwd + back == 2)
    }

    /// Every edge is traversed once in each direction.
    pub fn is_consistently_oriented(&self) -> bool {
        edge_counts(&self.triangles).values().all(|&(fwd, back)| fwd == 1 && back == 1)
    }

    pub fn transformed(&self, pose: &Pose) -> TriMesh {
        TriMesh {
            vertices: self.vertices.iter().map(|v| pose.apply(v)).collect(),
            triangles: self.triangles.clone(),
            part_labels: self.part_labels.clone(),
        }
    }

    /// Appends `other`, tagging its triangles with `label`.
    pub fn append_labeled(&mut self, other: &TriMesh, label: u32) {
        let offset = self.vertices.len() as u32;
        let prior = self.triangles.len();
        self.vertices.extend_from_slice(&other.vertices);
        self.triangles.extend(other.triangles.iter().map(|t| [t[0] + offset, t[1] + offset, t[2] + offset]));
        let labels = self.part_labels.get_or_insert_with(|| vec![0; prior]);
        labels.extend(std::iter::repeat_n(label, other.triangles.len()));
    }

    /// Divergence-theorem volume without the closedness check.
    pub fn signed_volume_unchecked(&self) -> f64 {
        (0..self.triangles.len())
            .map(|t| {
                let [a, b, c] = self.triangle(t);
                a.dot(&b.cross(&c))
            })
            .sum::<f64>()
            / 6.0
    }
}

/// Map from undirected edge (lo, hi) to (count lo->hi, count hi->lo).
fn edge_counts(triangles: &[[u32; 3]]) -> HashMap<(u32, u32), (u32, u32)> {
    let mut m: HashMap<(u32, u32), (u32, u32)> = HashMap::with_capacity(triangles.len() * 2);
    for t in triangles {
        for (a, b) in [(t[0], t[1]), (t[1], t[2]), (t[2], t[0])] {
            let e = m.entry((a.min(b), a.max(b))).or_default();
            if a < b {
                e.0 += 1;
            } else {
                e.1 += 1;
            }
        }
    }
    m
}

/// Signed volume of a closed mesh. Positive for outward orientation.
pub fn mesh_volume(mesh: &TriMesh) -> Result<f64, MeshError> {
    if !mesh.is_watertight() {
        return Err(MeshError::NotWatertight);
    }
    Ok(mesh.signed_volume_unchecked())
}

/// Triangulates a primitive in its local frame.
pub fn mesh_primitive(spec: &PrimitiveSpec, tess: &Tessellation) -> TriMesh {
    match *spec {
        PrimitiveSpec::Cuboid { width, height, length } => cuboid(width, length, height),
        PrimitiveSpec::Sphere { diameter } => icosphere(diameter / 2.0, tess.sphere_subdivisions),
        PrimitiveSpec::Cylinder { diameter, height } => cylinder(diameter / 2.0, height, tess.radial_segments.max(3)),
        PrimitiveSpec::Ring { outer_diameter, wall_thickness, height } => {
            let ro = outer_diameter / 2.0;
            ring(ro, ro - wall_thickness, height, tess.radial_segments.max(3))
        }
    }
}

/// Meshes every part, applies its pose and concatenates with part labels.
/// Overlapping interiors are kept; no boolean union happens here.
pub fn mesh_toy(toy: &ToySpec, tess: &Tessellation) -> TriMesh {
    let mut out = TriMesh { part_labels: Some(Vec::new()), ..Default::default() };
    for (k, part) in toy.parts.iter().enumerate() {
        let m = mesh_primitive(&part.spec, tess).transformed(&part.pose);
        out.append_labeled(&m, k as u32);
    }
    out
}

fn quad(tris: &mut Vec<[u32; 3]>, a: u32, b: u32, c: u32, d: u32) {
    tris.push([a, b, c]);
    tris.push([a, c, d]);
}

/// Box with extents `sx` x `sy` x `sz`; vertex `i` has bit 0/1/2 set for +x/+y/+z.
fn cuboid(sx: f64, sy: f64, sz: f64) -> TriMesh {
    let (hx, hy, hz) = (sx / 2.0, sy / 2.0, sz / 2.0);
    let vertices = (0..8)
        .map(|i| {
            Vec3::new(
                if i & 1 != 0 { hx } else { -hx },
                if i & 2 != 0 { hy } else { -hy },
                if i & 4 != 0 { hz } else { -hz },
            )
        })
        .collect();
    let mut triangles = Vec::with_capacity(12);
    for [a, b, c, d] in [[0, 4, 6, 2], [1, 3, 7, 5], [0, 1, 5, 4], [2, 6, 7, 3], [0, 2, 3, 1], [4, 5, 7, 6]] {
        quad(&mut triangles, a, b, c, d);
    }
    TriMesh { vertices, triangles, part_labels: None }
}

const ICOSAHEDRON_FACES: [[u32; 3]; 20] = [
    [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
    [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
    [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
    [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
];

fn icosphere(radius: f64, subdivisions: u32) -> TriMesh {
    let t = (1.0 + 5f64.sqrt()) / 2.0;
    let mut unit: Vec<Vec3> = [
        (-1.0, t, 0.0), (1.0, t, 0.0), (-1.0, -t, 0.0), (1.0, -t, 0.0),
        (0.0, -1.0, t), (0.0, 1.0, t), (0.0, -1.0, -t), (0.0, 1.0, -t),
        (t, 0.0, -1.0), (t, 0.0, 1.0), (-t, 0.0, -1.0), (-t, 0.0, 1.0),
    ]
    .iter()
    .map(|&(x, y, z)| Vec3::new(x, y, z).normalize())
    .collect();
    let mut faces = ICOSAHEDRON_FACES.to_vec();
    for _ in 0..subdivisions {
        let mut midpoint: HashMap<(u32, u32), u32> = HashMap::new();
        let mut next = Vec::with_capacity(faces.len() * 4);
        let mut mid = |a: u32, b: u32, unit: &mut Vec<Vec3>| -> u32 {
            *midpoint.entry((a.min(b), a.max(b))).or_insert_with(|| {
                unit.push(((unit[a as usize] + unit[b as usize]) / 2.0).normalize());
                (unit.len() - 1) as u32
            })
        };
        for &[a, b, c] in &faces {
            let ab = mid(a, b, &mut unit);
            let bc = mid(b, c, &mut unit);
            let ca = mid(c, a, &mut unit);
            next.extend_from_slice(&[[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
        }
        faces = next;
    }
    TriMesh { vertices: unit.into_iter().map(|v| v * radius).collect(), triangles: faces, part_labels: None }
}

fn circle(radius: f64, z: f64, n: u32) -> impl Iterator<Item = Vec3> {
    (0..n).map(move |i| {
        let a = 2.0 * PI * f64::from(i) / f64::from(n);
        Vec3::new(radius * a.cos(), radius * a.sin(), z)
    })
}

fn cylinder(radius: f64, height: f64, n: u32) -> TriMesh {
    let h = height / 2.0;
    let mut vertices: Vec<Vec3> = circle(radius, -h, n).chain(circle(radius, h, n)).collect();
    vertices.push(Vec3::new(0.0, 0.0, -h));
    vertices.push(Vec3::new(0.0, 0.0, h));
    let (cb, ct) = (2 * n, 2 * n + 1);
    let mut triangles = Vec::with_capacity(4 * n as usize);
    for i in 0..n {
        let j = (i + 1) % n;
        quad(&mut triangles, i, j, n + j, n + i);
        triangles.push([ct, n + i, n + j]);
        triangles.push([cb, j, i]);
    }
    TriMesh { vertices, triangles, part_labels: None }
}

fn ring(outer: f64, inner: f64, height: f64, n: u32) -> TriMesh {
    let h = height / 2.0;
    // outer bottom, outer top, inner bottom, inner top
    let vertices: Vec<Vec3> = circle(outer, -h, n)
        .chain(circle(outer, h, n))
        .chain(circle(inner, -h, n))
        .chain(circle(inner, h, n))
        .collect();
    let (ob, ot, ib, it) = (0, n, 2 * n, 3 * n);
    let mut triangles = Vec::with_capacity(8 * n as usize);
    for i in 0..n {
        let j = (i + 1) % n;
        quad(&mut triangles, ob + i, ob + j, ot + j, ot + i);
        quad(&mut triangles, ib + j, ib + i, it + i, it + j);
        quad(&mut triangles, it + i, ot + i, ot + j, it + j);
        quad(&mut triangles, ib + j, ob + j, ob + i, ib + i);
    }
    TriMesh { vertices, triangles, part_labels: None }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::primitives::PlacedPrimitive;

    fn specs() -> Vec<PrimitiveSpec> {
        vec![
            PrimitiveSpec::Cuboid { width: 0.02, height: 0.20, length: 0.28 },
            PrimitiveSpec::Sphere { diameter: 0.08 },
            PrimitiveSpec::Cylinder { diameter: 0.06, height: 0.10 },
            PrimitiveSpec::Ring { outer_diameter: 0.10, wall_thickness: 0.01, height: 0.04 },
        ]
    }

    #[test]
    fn primitives_are_closed_oriented_and_valid() {
        for s in specs() {
            let m = mesh_primitive(&s, &Tessellation::default());
            m.validate().unwrap();
            assert!(m.is_watertight(), "{s:?}");
            assert!(m.is_consistently_oriented(), "{s:?}");
            assert!(mesh_volume(&m).unwrap() > 0.0, "{s:?}");
        }
    }

    #[test]
    fn cuboid_volume_and_counts() {
        let m = mesh_primitive(&specs()[0], &Tessellation::default());
        assert_eq!(m.vertices.len(), 8);
        assert_eq!(m.triangles.len(), 12);
        let v = mesh_volume(&m).unwrap();
        assert!((v - 0.00112).abs() <= 1e-18, "{v}");
        let unit = mesh_primitive(&PrimitiveSpec::Cuboid { width: 0.1, height: 0.1, length: 0.1 }, &Tessellation::default());
        assert!((mesh_volume(&unit).unwrap() - 1e-3).abs() <= 1e-18);
    }

    #[test]
    fn cylinder_volume_close_to_analytic() {
        let s = PrimitiveSpec::Cylinder { diameter: 0.06, height: 0.10 };
        let m = mesh_primitive(&s, &Tessellation { radial_segments: 128, ..Default::default() });
        let rel = (mesh_volume(&m).unwrap() - s.volume()).abs() / s.volume();
        assert!(rel < 0.005, "{rel}");
    }

    #[test]
    fn missing_triangle_is_not_watertight() {
        let mut m = mesh_primitive(&specs()[2], &Tessellation::default());
        m.triangles.remove(7);
        assert_eq!(mesh_volume(&m), Err(MeshError::NotWatertight));
    }

    fn contains_within(s: &PrimitiveSpec, v: &Vec3, tol: f64) -> bool {
        let r = v.x.hypot(v.y);
        match *s {
            PrimitiveSpec::Cuboid { width, height, length } => {
                v.x.abs() <= width / 2.0 + tol && v.y.abs() <= length / 2.0 + tol && v.z.abs() <= height / 2.0 + tol
            }
            PrimitiveSpec::Sphere { diameter } => v.norm() <= diameter / 2.0 + tol,
            PrimitiveSpec::Cylinder { diameter, height } => r <= diameter / 2.0 + tol && v.z.abs() <= height / 2.0 + tol,
            PrimitiveSpec::Ring { outer_diameter, wall_thickness, height } => {
                let ro = outer_diameter / 2.0;
                ro - wall_thickness - tol <= r && r <= ro + tol && v.z.abs() <= height / 2.0 + tol
            }
        }
    }

    #[test]
    fn vertices_lie_in_the_solid() {
        for s in specs() {
            let m = mesh_primitive(&s, &Tessellation::default());
            for v in &m.vertices {
                assert!(contains_within(&s, v, 1e-9), "{s:?} {v:?}");
            }
        }
    }

    #[test]
    fn toy_mesh_concatenates_with_labels() {
        let toy = ToySpec {
            id: "t".into(),
            seed: 0,
            category: crate::assembler::Category::Multi { parts: 2 },
            color: crate::assembler::ToyColor::Red,
            parts: vec![
                PlacedPrimitive::new(specs()[0], Pose::identity()),
                PlacedPrimitive::new(specs()[1], Pose::new(Default::default(), Vec3::new(0.0, 0.0, 0.05))),
            ],
        };
        let tess = Tessellation::default();
        let m = mesh_toy(&toy, &tess);
        let a = mesh_primitive(&specs()[0], &tess);
        let b = mesh_primitive(&specs()[1], &tess);
        assert_eq!(m.triangles.len(), a.triangles.len() + b.triangles.len());
        let labels = m.part_labels.as_ref().unwrap();
        assert!(labels.iter().all(|&l| l <= 1));
        assert_eq!(labels.iter().filter(|&&l| l == 0).count(), 12);
    }

    #[test]
    fn tessellation_bounds() {
        assert!(Tessellation { radial_segments: 7, ..Default::default() }.validate().is_err());
        Tessellation::default().validate().unwrap();
    }
}
