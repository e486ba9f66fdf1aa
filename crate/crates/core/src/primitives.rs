//! The four shape primitives: parametric specs, dimension sampling, analytic
//! solid membership and uniform interior sampling.
//!
//! All lengths are meters. Local frames are centered on the primitive's
//! centroid; cuboid extents are `width` along x, `length` along y and
//! `height` along z, and cylinders and rings have their axis along z.

use std::f64::consts::PI;

use nalgebra::{Quaternion, UnitQuaternion, Vector3};
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type Vec3 = Vector3<f64>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PrimitiveError {
    #[error("invalid dimension ranges: {0}")]
    InvalidRanges(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PrimitiveKind {
    Cuboid,
    Sphere,
    Cylinder,
    Ring,
}

impl PrimitiveKind {
    pub const ALL: [PrimitiveKind; 4] = [
        PrimitiveKind::Cuboid,
        PrimitiveKind::Sphere,
        PrimitiveKind::Cylinder,
        PrimitiveKind::Ring,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PrimitiveKind::Cuboid => "cuboid",
            PrimitiveKind::Sphere => "sphere",
            PrimitiveKind::Cylinder => "cylinder",
            PrimitiveKind::Ring => "ring",
        }
    }
}

impl std::fmt::Display for PrimitiveKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Closed interval `[lo, hi]`, serialized as a two-element array.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub const fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi }
    }

    pub fn contains(&self, v: f64) -> bool {
        self.lo <= v && v <= self.hi
    }

    /// Uniform draw. A zero-width interval yields `lo` exactly.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u: f64 = rng.random();
        let v = self.lo + (self.hi - self.lo) * u;
        v.min(self.hi)
    }

    fn validate(&self, what: &str) -> Result<(), PrimitiveError> {
        if !(self.lo.is_finite() && self.hi.is_finite()) {
            return Err(PrimitiveError::InvalidRanges(format!("{what}: non-finite bound")));
        }
        if self.lo <= 0.0 {
            return Err(PrimitiveError::InvalidRanges(format!("{what}: lower bound {} is not positive", self.lo)));
        }
        if self.lo > self.hi {
            return Err(PrimitiveError::InvalidRanges(format!("{what}: inverted interval [{}, {}]", self.lo, self.hi)));
        }
        Ok(())
    }
}

impl From<[f64; 2]> for Interval {
    fn from(v: [f64; 2]) -> Self {
        Interval::new(v[0], v[1])
    }
}

impl From<Interval> for [f64; 2] {
    fn from(i: Interval) -> Self {
        [i.lo, i.hi]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CuboidRanges {
    pub width: Interval,
    pub height: Interval,
    pub length: Interval,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SphereRanges {
    pub diameter: Interval,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CylinderRanges {
    pub diameter: Interval,
    pub height: Interval,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RingRanges {
    pub outer_diameter: Interval,
    pub wall_thickness: Interval,
    pub height: Interval,
}

/// Per-kind dimension intervals in meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DimensionRanges {
    pub cuboid: CuboidRanges,
    pub sphere: SphereRanges,
    pub cylinder: CylinderRanges,
    pub ring: RingRanges,
}

impl DimensionRanges {
    /// The standard toy dimension table (specified in centimeters, written
    /// here as meter literals so no rounding creeps in).
    pub const fn standard() -> Self {
        Self {
            cuboid: CuboidRanges {
                width: Interval::new(0.02, 0.072),
                height: Interval::new(0.01, 0.20),
                length: Interval::new(0.02, 0.28),
            },
            sphere: SphereRanges { diameter: Interval::new(0.01, 0.08) },
            cylinder: CylinderRanges { diameter: Interval::new(0.04, 0.07), height: Interval::new(0.04, 0.12) },
            ring: RingRanges {
                outer_diameter: Interval::new(0.06, 0.20),
                wall_thickness: Interval::new(0.006, 0.018),
                height: Interval::new(0.02, 0.06),
            },
        }
    }

    pub fn validate(&self) -> Result<(), PrimitiveError> {
        self.cuboid.width.validate("cuboid.width")?;
        self.cuboid.height.validate("cuboid.height")?;
        self.cuboid.length.validate("cuboid.length")?;
        self.sphere.diameter.validate("sphere.diameter")?;
        self.cylinder.diameter.validate("cylinder.diameter")?;
        self.cylinder.height.validate("cylinder.height")?;
        self.ring.outer_diameter.validate("ring.outer_diameter")?;
        self.ring.wall_thickness.validate("ring.wall_thickness")?;
        self.ring.height.validate("ring.height")?;
        // every admissible ring must keep a positive inner radius
        if self.ring.wall_thickness.hi >= self.ring.outer_diameter.lo / 2.0 {
            return Err(PrimitiveError::InvalidRanges(format!(
                "ring: max wall thickness {} must be below min outer radius {}",
                self.ring.wall_thickness.hi,
                self.ring.outer_diameter.lo / 2.0
            )));
        }
        Ok(())
    }

    /// Whether `spec` lies inside these ranges.
    pub fn admits(&self, spec: &PrimitiveSpec) -> bool {
        match *spec {
            PrimitiveSpec::Cuboid { width, height, length } => {
                self.cuboid.width.contains(width) && self.cuboid.height.contains(height) && self.cuboid.length.contains(length)
            }
            PrimitiveSpec::Sphere { diameter } => self.sphere.diameter.contains(diameter),
            PrimitiveSpec::Cylinder { diameter, height } => {
                self.cylinder.diameter.contains(diameter) && self.cylinder.height.contains(height)
            }
            PrimitiveSpec::Ring { outer_diameter, wall_thickness, height } => {
                self.ring.outer_diameter.contains(outer_diameter)
                    && self.ring.wall_thickness.contains(wall_thickness)
                    && self.ring.height.contains(height)
                    && wall_thickness < outer_diameter / 2.0
            }
        }
    }
}

impl Default for DimensionRanges {
    fn default() -> Self {
        Self::standard()
    }
}

/// A primitive kind together with its dimensions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "dims", rename_all = "snake_case")]
pub enum PrimitiveSpec {
    Cuboid { width: f64, height: f64, length: f64 },
    Sphere { diameter: f64 },
    Cylinder { diameter: f64, height: f64 },
    Ring { outer_diameter: f64, wall_thickness: f64, height: f64 },
}

impl PrimitiveSpec {
    pub fn kind(&self) -> PrimitiveKind {
        match self {
            PrimitiveSpec::Cuboid { .. } => PrimitiveKind::Cuboid,
            PrimitiveSpec::Sphere { .. } => PrimitiveKind::Sphere,
            PrimitiveSpec::Cylinder { .. } => PrimitiveKind::Cylinder,
            PrimitiveSpec::Ring { .. } => PrimitiveKind::Ring,
        }
    }

    /// Analytic solid volume in cubic meters.
    pub fn volume(&self) -> f64 {
        match *self {
            PrimitiveSpec::Cuboid { width, height, length } => width * height * length,
            PrimitiveSpec::Sphere { diameter } => 4.0 / 3.0 * PI * (diameter / 2.0).powi(3),
            PrimitiveSpec::Cylinder { diameter, height } => PI * (diameter / 2.0).powi(2) * height,
            PrimitiveSpec::Ring { outer_diameter, wall_thickness, height } => {
                let ro = outer_diameter / 2.0;
                let ri = ro - wall_thickness;
                PI * (ro * ro - ri * ri) * height
            }
        }
    }

    /// Smallest parallel-jaw width of the solid in isolation.
    pub fn analytic_min_width(&self) -> f64 {
        match *self {
            PrimitiveSpec::Cuboid { width, height, length } => width.min(height).min(length),
            PrimitiveSpec::Sphere { diameter } => diameter,
            PrimitiveSpec::Cylinder { diameter, height } => diameter.min(height),
            PrimitiveSpec::Ring { outer_diameter, height, .. } => outer_diameter.min(height),
        }
    }

    /// Membership test in the primitive's local frame. Boundary is inside.
    pub fn contains_local(&self, q: &Vec3) -> bool {
        match *self {
            PrimitiveSpec::Cuboid { width, height, length } => {
                q.x.abs() <= width / 2.0 && q.y.abs() <= length / 2.0 && q.z.abs() <= height / 2.0
            }
            PrimitiveSpec::Sphere { diameter } => q.norm() <= diameter / 2.0,
            PrimitiveSpec::Cylinder { diameter, height } => {
                q.x.hypot(q.y) <= diameter / 2.0 && q.z.abs() <= height / 2.0
            }
            PrimitiveSpec::Ring { outer_diameter, wall_thickness, height } => {
                let ro = outer_diameter / 2.0;
                let ri = ro - wall_thickness;
                let r = q.x.hypot(q.y);
                ri <= r && r <= ro && q.z.abs() <= height / 2.0
            }
        }
    }
}

/// Rigid transform: `world = rotation * local + translation`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub rotation: UnitQuaternion<f64>,
    pub translation: Vec3,
}

impl Pose {
    pub fn identity() -> Self {
        Self { rotation: UnitQuaternion::identity(), translation: Vec3::zeros() }
    }

    pub fn new(rotation: UnitQuaternion<f64>, translation: Vec3) -> Self {
        Self { rotation: canonical(rotation), translation }
    }

    pub fn apply(&self, local: &Vec3) -> Vec3 {
        self.rotation * local + self.translation
    }

    pub fn apply_inverse(&self, world: &Vec3) -> Vec3 {
        self.rotation.inverse_transform_vector(&(world - self.translation))
    }

    /// `self` followed by `outer`.
    pub fn then(&self, outer: &Pose) -> Pose {
        Pose::new(outer.rotation * self.rotation, outer.apply(&self.translation))
    }

    /// Quaternion as `[w, x, y, z]`.
    pub fn wxyz(&self) -> [f64; 4] {
        let q = self.rotation.quaternion();
        [q.w, q.i, q.j, q.k]
    }
}

#[derive(Serialize, Deserialize)]
struct PoseRepr {
    quaternion: [f64; 4],
    translation: [f64; 3],
}

impl Serialize for Pose {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        PoseRepr { quaternion: self.wxyz(), translation: self.translation.into() }.serialize(s)
    }
}

impl<'de> Deserialize<'de> for Pose {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let r = PoseRepr::deserialize(d)?;
        let [w, x, y, z] = r.quaternion;
        let q = Quaternion::new(w, x, y, z);
        let n = q.norm();
        if !(n - 1.0).abs().le(&1e-9) {
            return Err(serde::de::Error::custom(format!("quaternion norm {n} is not 1")));
        }
        // Stored quaternions are already unit and canonical; keep the bits.
        Ok(Pose { rotation: UnitQuaternion::new_unchecked(q), translation: Vec3::from(r.translation) })
    }
}

/// Flip the sign so that `w >= 0`.
pub fn canonical(q: UnitQuaternion<f64>) -> UnitQuaternion<f64> {
    if q.quaternion().w < 0.0 {
        UnitQuaternion::new_unchecked(-q.into_inner())
    } else {
        q
    }
}

/// A primitive with its pose inside a toy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlacedPrimitive {
    #[serde(flatten)]
    pub spec: PrimitiveSpec,
    #[serde(flatten)]
    pub pose: Pose,
}

impl PlacedPrimitive {
    pub fn new(spec: PrimitiveSpec, pose: Pose) -> Self {
        Self { spec, pose }
    }

    pub fn centroid(&self) -> Vec3 {
        self.pose.translation
    }
}

/// True iff the world-frame `point` lies in the posed solid.
pub fn contains(p: &PlacedPrimitive, point: &Vec3) -> bool {
    p.spec.contains_local(&p.pose.apply_inverse(point))
}

/// Draws each dimension of `kind` independently and uniformly from `ranges`.
pub fn sample_primitive<R: Rng + ?Sized>(
    kind: PrimitiveKind,
    ranges: &DimensionRanges,
    rng: &mut R,
) -> Result<PrimitiveSpec, PrimitiveError> {
    ranges.validate()?;
    Ok(match kind {
        PrimitiveKind::Cuboid => PrimitiveSpec::Cuboid {
            width: ranges.cuboid.width.sample(rng),
            height: ranges.cuboid.height.sample(rng),
            length: ranges.cuboid.length.sample(rng),
        },
        PrimitiveKind::Sphere => PrimitiveSpec::Sphere { diameter: ranges.sphere.diameter.sample(rng) },
        PrimitiveKind::Cylinder => PrimitiveSpec::Cylinder {
            diameter: ranges.cylinder.diameter.sample(rng),
            height: ranges.cylinder.height.sample(rng),
        },
        PrimitiveKind::Ring => PrimitiveSpec::Ring {
            outer_diameter: ranges.ring.outer_diameter.sample(rng),
            wall_thickness: ranges.ring.wall_thickness.sample(rng),
            height: ranges.ring.height.sample(rng),
        },
    })
}

fn symmetric<R: Rng + ?Sized>(extent: f64, rng: &mut R) -> f64 {
    let half = extent / 2.0;
    (rng.random::<f64>() * 2.0 - 1.0) * half
}

/// Uniform point in the solid volume, in the local frame.
pub fn sample_point_in<R: Rng + ?Sized>(spec: &PrimitiveSpec, rng: &mut R) -> Vec3 {
    match *spec {
        PrimitiveSpec::Cuboid { width, height, length } => {
            let x = symmetric(width, rng);
            let y = symmetric(length, rng);
            let z = symmetric(height, rng);
            Vec3::new(x, y, z)
        }
        PrimitiveSpec::Sphere { diameter } => {
            let dir = random_unit_vector(rng);
            let r = diameter / 2.0 * rng.random::<f64>().cbrt();
            dir * r
        }
        PrimitiveSpec::Cylinder { diameter, height } => {
            let theta = 2.0 * PI * rng.random::<f64>();
            let r = diameter / 2.0 * rng.random::<f64>().sqrt();
            let z = symmetric(height, rng);
            Vec3::new(r * theta.cos(), r * theta.sin(), z)
        }
        PrimitiveSpec::Ring { outer_diameter, wall_thickness, height } => {
            let ro = outer_diameter / 2.0;
            let ri = ro - wall_thickness;
            let theta = 2.0 * PI * rng.random::<f64>();
            let u: f64 = rng.random();
            let r = (ri * ri + u * (ro * ro - ri * ri)).sqrt().clamp(ri, ro);
            let z = symmetric(height, rng);
            Vec3::new(r * theta.cos(), r * theta.sin(), z)
        }
    }
}

/// Uniform direction on the unit sphere (Archimedes' z-slicing).
pub fn random_unit_vector<R: Rng + ?Sized>(rng: &mut R) -> Vec3 {
    let z = 2.0 * rng.random::<f64>() - 1.0;
    let phi = 2.0 * PI * rng.random::<f64>();
    let s = (1.0 - z * z).max(0.0).sqrt();
    Vec3::new(s * phi.cos(), s * phi.sin(), z)
}

/// Uniform rotation on SO(3) via Shoemake's subgroup algorithm.
pub fn sample_rotation<R: Rng + ?Sized>(rng: &mut R) -> UnitQuaternion<f64> {
    let u1: f64 = rng.random();
    let u2: f64 = rng.random();
    let u3: f64 = rng.random();
    let a = (1.0 - u1).sqrt();
    let b = u1.sqrt();
    let (s2, c2) = (2.0 * PI * u2).sin_cos();
    let (s3, c3) = (2.0 * PI * u3).sin_cos();
    let q = Quaternion::new(b * c3, a * s2, a * c2, b * s3);
    canonical(UnitQuaternion::from_quaternion(q))
}
