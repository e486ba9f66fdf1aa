//! Graspability and print-feasibility analysis of toy meshes.
//!
//! Parallel-jaw width along a direction is the support-function width of
//! the vertex set. The minimum over directions is searched on a Fibonacci
//! sphere and then refined locally around the best sample.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::assembler::ToySpec;
use crate::meshio::{Aabb, TriMesh};
use crate::primitives::{PrimitiveSpec, Vec3};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalysisError {
    #[error("mesh has no vertices")]
    EmptyMesh,
    #[error("direction norm {0} is not 1")]
    NonUnitDirection(f64),
    #[error("need at least {min} directions, got {got}")]
    TooFewDirections { min: usize, got: usize },
    #[error("invalid gripper: {0}")]
    InvalidGripper(String),
}

pub const MIN_DIRECTIONS: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GripperModel {
    pub max_opening: f64,
    pub min_opening: f64,
}

impl Default for GripperModel {
    /// Two-finger 85 mm adaptive gripper.
    fn default() -> Self {
        Self { max_opening: 0.085, min_opening: 0.0 }
    }
}

impl GripperModel {
    pub fn validate(&self) -> Result<(), AnalysisError> {
        if !(0.0 <= self.min_opening && self.min_opening < self.max_opening) {
            return Err(AnalysisError::InvalidGripper(format!(
                "need 0 <= min_opening ({}) < max_opening ({})",
                self.min_opening, self.max_opening
            )));
        }
        Ok(())
    }

    pub fn accepts(&self, width: f64) -> bool {
        self.min_opening <= width && width <= self.max_opening
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PrintConstraints {
    /// Edge of the cubic build volume in meters.
    pub build_edge: f64,
    /// Ring walls thinner than this are flagged.
    pub min_wall: f64,
}

impl Default for PrintConstraints {
    fn default() -> Self {
        Self { build_edge: 0.256, min_wall: 0.008 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Caliper {
    pub width: f64,
    pub direction: Vec3,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrintFeasibility {
    pub aabb: Aabb,
    pub fits_build_volume: bool,
    pub suggested_scale: f64,
    pub min_ring_wall: Option<f64>,
    pub thin_wall: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeasibilityReport {
    pub id: String,
    pub aabb: Aabb,
    pub min_caliper_width: f64,
    pub graspable: bool,
    pub fits_build_volume: bool,
    pub suggested_scale: f64,
    pub min_ring_wall: Option<f64>,
    pub thin_wall: bool,
    /// Analytic minimum width of each part on its own, for local grasps.
    pub part_min_widths: Vec<f64>,
}

fn check_direction(d: &Vec3) -> Result<(), AnalysisError> {
    let n = d.norm();
    if (n - 1.0).abs() > 1e-9 {
        return Err(AnalysisError::NonUnitDirection(n));
    }
    Ok(())
}

fn width_unchecked(vertices: &[Vec3], d: &Vec3) -> f64 {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for v in vertices {
        let p = v.dot(d);
        lo = lo.min(p);
        hi = hi.max(p);
    }
    hi - lo
}

/// Extent of the mesh along a unit direction.
pub fn directional_width(mesh: &TriMesh, direction: &Vec3) -> Result<f64, AnalysisError> {
    if mesh.vertices.is_empty() {
        return Err(AnalysisError::EmptyMesh);
    }
    check_direction(direction)?;
    Ok(width_unchecked(&mesh.vertices, direction))
}

/// `n` near-uniform unit vectors on the sphere.
pub fn fibonacci_directions(n: usize) -> Vec<Vec3> {
    let golden_angle = PI * (3.0 - 5f64.sqrt());
    (0..n)
        .map(|i| {
            let z = 1.0 - (2.0 * i as f64 + 1.0) / n as f64;
            let r = (1.0 - z * z).max(0.0).sqrt();
            let phi = golden_angle * i as f64;
            Vec3::new(r * phi.cos(), r * phi.sin(), z)
        })
        .collect()
}

const INV_PHI: f64 = 0.618_033_988_749_894_9;

/// Golden-section search on `[lo, hi]`; returns the best point evaluated.
fn golden_min(mut f: impl FnMut(f64) -> f64, mut lo: f64, mut hi: f64, iters: usize) -> (f64, f64) {
    let mut best = (lo, f(lo));
    let note = |x: f64, fx: f64, best: &mut (f64, f64)| {
        if fx < best.1 {
            *best = (x, fx);
        }
    };
    let fh = f(hi);
    note(hi, fh, &mut best);
    let mut a = hi - INV_PHI * (hi - lo);
    let mut b = lo + INV_PHI * (hi - lo);
    let mut fa = f(a);
    let mut fb = f(b);
    note(a, fa, &mut best);
    note(b, fb, &mut best);
    for _ in 0..iters {
        if fa <= fb {
            hi = b;
            b = a;
            fb = fa;
            a = hi - INV_PHI * (hi - lo);
            fa = f(a);
            note(a, fa, &mut best);
        } else {
            lo = a;
            a = b;
            fa = fb;
            b = lo + INV_PHI * (hi - lo);
            fb = f(b);
            note(b, fb, &mut best);
        }
    }
    best
}

fn orthonormal_basis(d: &Vec3) -> (Vec3, Vec3) {
    let helper = if d.x.abs() < 0.9 { Vec3::x() } else { Vec3::y() };
    let e1 = d.cross(&helper).normalize();
    let e2 = d.cross(&e1);
    (e1, e2)
}

const AZIMUTH_SAMPLES: usize = 16;
const REFINE_ROUNDS: usize = 8;
const TILT_ITERS: usize = 48;
const AZIMUTH_ITERS: usize = 32;

/// Local refinement in spherical angles around `start`: tilt away from the
/// current best along azimuth `beta`, golden-section on the tilt, and
/// golden-section on the azimuth of the best ray.
fn refine(vertices: &[Vec3], start: Caliper, radius: f64) -> Caliper {
    let mut best = start;
    let mut radius = radius;
    for _ in 0..REFINE_ROUNDS {
        let center = best.direction;
        let (e1, e2) = orthonormal_basis(&center);
        let dir = |alpha: f64, beta: f64| {
            let (sb, cb) = beta.sin_cos();
            let (sa, ca) = alpha.sin_cos();
            (center * ca + (e1 * cb + e2 * sb) * sa).normalize()
        };
        let ray = |beta: f64| golden_min(|a| width_unchecked(vertices, &dir(a, beta)), 0.0, radius, TILT_ITERS);
        let step = 2.0 * PI / AZIMUTH_SAMPLES as f64;
        let mut best_beta = (0.0, f64::INFINITY, 0.0);
        for k in 0..AZIMUTH_SAMPLES {
            let beta = step * k as f64;
            let (alpha, w) = ray(beta);
            if w < best_beta.1 {
                best_beta = (beta, w, alpha);
            }
        }
        let (beta, _) = golden_min(|b| ray(b).1, best_beta.0 - step, best_beta.0 + step, AZIMUTH_ITERS);
        let (alpha, w) = ray(beta);
        let (beta, alpha, w) = if w <= best_beta.1 { (beta, alpha, w) } else { (best_beta.0, best_beta.2, best_beta.1) };
        if w < best.width {
            best = Caliper { width: w, direction: dir(alpha, beta) };
            radius = (2.0 * alpha).max(radius * 0.25);
        } else {
            radius *= 0.5;
        }
    }
    best
}

/// Minimum directional width over `n_directions` Fibonacci directions,
/// refined locally. The result never exceeds any sampled width.
pub fn min_caliper_width(mesh: &TriMesh, n_directions: usize) -> Result<Caliper, AnalysisError> {
    if mesh.vertices.is_empty() {
        return Err(AnalysisError::EmptyMesh);
    }
    if n_directions < MIN_DIRECTIONS {
        return Err(AnalysisError::TooFewDirections { min: MIN_DIRECTIONS, got: n_directions });
    }
    let mut best = Caliper { width: f64::INFINITY, direction: Vec3::z() };
    for d in fibonacci_directions(n_directions) {
        let w = width_unchecked(&mesh.vertices, &d);
        if w < best.width {
            best = Caliper { width: w, direction: d };
        }
    }
    let spacing = (4.0 * PI / n_directions as f64).sqrt();
    Ok(refine(&mesh.vertices, best, 2.0 * spacing))
}

/// Whether the whole-object minimum width fits the gripper opening range.
pub fn grasp_feasibility(mesh: &TriMesh, gripper: &GripperModel, n_directions: usize) -> Result<bool, AnalysisError> {
    gripper.validate()?;
    Ok(gripper.accepts(min_caliper_width(mesh, n_directions)?.width))
}

pub fn print_feasibility(toy: &ToySpec, mesh: &TriMesh, build_edge: f64, min_wall: f64) -> Result<PrintFeasibility, AnalysisError> {
    let aabb = mesh.aabb().ok_or(AnalysisError::EmptyMesh)?;
    let max_extent = aabb.max_extent();
    let min_ring_wall = toy
        .parts
        .iter()
        .filter_map(|p| match p.spec {
            PrimitiveSpec::Ring { wall_thickness, .. } => Some(wall_thickness),
            _ => None,
        })
        .reduce(f64::min);
    Ok(PrintFeasibility {
        aabb,
        fits_build_volume: aabb.extents().iter().all(|&e| e <= build_edge),
        suggested_scale: if max_extent > 0.0 { (build_edge / max_extent).min(1.0) } else { 1.0 },
        min_ring_wall,
        thin_wall: min_ring_wall.is_some_and(|w| w < min_wall),
    })
}

pub fn feasibility_report(
    toy: &ToySpec,
    mesh: &TriMesh,
    gripper: &GripperModel,
    print: &PrintConstraints,
    n_directions: usize,
) -> Result<FeasibilityReport, AnalysisError> {
    gripper.validate()?;
    let caliper = min_caliper_width(mesh, n_directions)?;
    let pf = print_feasibility(toy, mesh, print.build_edge, print.min_wall)?;
    Ok(FeasibilityReport {
        id: toy.id.clone(),
        aabb: pf.aabb,
        min_caliper_width: caliper.width,
        graspable: gripper.accepts(caliper.width),
        fits_build_volume: pf.fits_build_volume,
        suggested_scale: pf.suggested_scale,
        min_ring_wall: pf.min_ring_wall,
        thin_wall: pf.thin_wall,
        part_min_widths: toy.parts.iter().map(|p| p.spec.analytic_min_width()).collect(),
    })
}

pub const REPORT_CSV_HEADER: [&str; 7] =
    ["id", "min_width", "graspable", "fits", "scale", "min_ring_wall", "thin_wall"];

/// One CSV row per toy.
pub fn reports_csv(reports: &[FeasibilityReport]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(REPORT_CSV_HEADER).expect("in-memory write");
    for r in reports {
        w.write_record([
            r.id.clone(),
            r.min_caliper_width.to_string(),
            r.graspable.to_string(),
            r.fits_build_volume.to_string(),
            r.suggested_scale.to_string(),
            r.min_ring_wall.map(|w| w.to_string()).unwrap_or_default(),
            r.thin_wall.to_string(),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("flush")).expect("utf8")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assembler::{Category, ToyColor};
    use crate::meshio::{mesh_primitive, Tessellation};
    use crate::primitives::{PlacedPrimitive, Pose};

    fn mesh(spec: PrimitiveSpec) -> TriMesh {
        mesh_primitive(&spec, &Tessellation::default())
    }

    fn toy(parts: Vec<PrimitiveSpec>) -> ToySpec {
        ToySpec {
            id: "toy".into(),
            seed: 0,
            category: Category::Multi { parts: parts.len() },
            color: ToyColor::Blue,
            parts: parts.into_iter().map(|s| PlacedPrimitive::new(s, Pose::identity())).collect(),
        }
    }

    #[test]
    fn axis_aligned_cuboid_width() {
        let m = mesh(PrimitiveSpec::Cuboid { width: 0.02, height: 0.28, length: 0.10 });
        assert_eq!(directional_width(&m, &Vec3::x()).unwrap(), 0.02);
    }

    #[test]
    fn width_errors() {
        assert_eq!(directional_width(&TriMesh::default(), &Vec3::x()), Err(AnalysisError::EmptyMesh));
        let m = mesh(PrimitiveSpec::Sphere { diameter: 0.05 });
        assert!(matches!(directional_width(&m, &Vec3::new(1.0, 1.0, 0.0)), Err(AnalysisError::NonUnitDirection(_))));
        assert!(matches!(min_caliper_width(&m, 31), Err(AnalysisError::TooFewDirections { .. })));
    }

    #[test]
    fn sphere_caliper_is_diameter() {
        let m = mesh(PrimitiveSpec::Sphere { diameter: 0.05 });
        for n in [32, 100, 1024] {
            let c = min_caliper_width(&m, n).unwrap();
            assert!((c.width - 0.05).abs() / 0.05 < 0.01, "{n}: {}", c.width);
        }
    }

    #[test]
    fn cuboid_caliper_is_smallest_extent() {
        let m = mesh(PrimitiveSpec::Cuboid { width: 0.02, height: 0.28, length: 0.10 });
        for n in [256, 1024] {
            let c = min_caliper_width(&m, n).unwrap();
            assert!((c.width - 0.02).abs() <= 1e-6, "{n}: {}", c.width);
        }
    }

    #[test]
    fn cylinder_caliper_is_min_of_diameter_and_height() {
        let m = mesh(PrimitiveSpec::Cylinder { diameter: 0.06, height: 0.04 });
        let c = min_caliper_width(&m, 256).unwrap();
        assert!((c.width - 0.04).abs() / 0.04 < 0.01, "{}", c.width);
    }

    #[test]
    fn result_not_above_any_sample() {
        let m = mesh(PrimitiveSpec::Ring { outer_diameter: 0.12, wall_thickness: 0.01, height: 0.05 });
        let c = min_caliper_width(&m, 64).unwrap();
        for d in fibonacci_directions(64) {
            assert!(c.width <= directional_width(&m, &d).unwrap());
        }
        assert!((c.direction.norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn sphere_grasp_thresholds() {
        let g = GripperModel::default();
        assert!(grasp_feasibility(&mesh(PrimitiveSpec::Sphere { diameter: 0.05 }), &g, 64).unwrap());
        assert!(!grasp_feasibility(&mesh(PrimitiveSpec::Sphere { diameter: 0.09 }), &g, 64).unwrap());
        let bad = GripperModel { max_opening: 0.01, min_opening: 0.02 };
        assert!(grasp_feasibility(&mesh(PrimitiveSpec::Sphere { diameter: 0.05 }), &bad, 64).is_err());
    }

    #[test]
    fn oversize_toy_suggests_downscale() {
        let t = toy(vec![PrimitiveSpec::Cuboid { width: 0.30, height: 0.10, length: 0.10 }]);
        let pf = print_feasibility(&t, &mesh(t.parts[0].spec), 0.256, 0.008).unwrap();
        assert!(!pf.fits_build_volume);
        assert!((pf.suggested_scale - 0.256 / 0.30).abs() < 1e-12);
        assert!((pf.suggested_scale - 0.8533).abs() < 1e-4);
        assert_eq!(pf.min_ring_wall, None);
        assert!(!pf.thin_wall);
    }

    #[test]
    fn small_toy_fits() {
        let t = toy(vec![PrimitiveSpec::Cuboid { width: 0.05, height: 0.256, length: 0.1 }]);
        let pf = print_feasibility(&t, &mesh(t.parts[0].spec), 0.256, 0.008).unwrap();
        assert!(pf.fits_build_volume);
        assert_eq!(pf.suggested_scale, 1.0);
    }

    #[test]
    fn thin_ring_wall_flagged() {
        let ring = PrimitiveSpec::Ring { outer_diameter: 0.1, wall_thickness: 0.006, height: 0.03 };
        let t = toy(vec![ring, PrimitiveSpec::Ring { outer_diameter: 0.1, wall_thickness: 0.012, height: 0.03 }]);
        let pf = print_feasibility(&t, &mesh(ring), 0.256, 0.008).unwrap();
        assert_eq!(pf.min_ring_wall, Some(0.006));
        assert!(pf.thin_wall);
        let pf = print_feasibility(&t, &mesh(ring), 0.256, 0.005).unwrap();
        assert!(!pf.thin_wall);
    }

    #[test]
    fn csv_has_one_row_per_report() {
        let t = toy(vec![PrimitiveSpec::Sphere { diameter: 0.04 }]);
        let m = mesh(t.parts[0].spec);
        let r = feasibility_report(&t, &m, &GripperModel::default(), &PrintConstraints::default(), 64).unwrap();
        assert!(r.graspable);
        let csv = reports_csv(&[r.clone(), r]);
        assert_eq!(csv.lines().count(), 3);
        assert!(csv.starts_with("id,min_width,graspable,fits,scale,min_ring_wall,thin_wall\n"));
    }
}
