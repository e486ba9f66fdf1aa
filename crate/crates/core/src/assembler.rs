//! Composite toy assembly and whole-set generation.
//!
//! A toy is built part by part. Part 0 sits at the origin; every later part
//! has its centroid placed at a uniform interior point of a uniformly chosen
//! earlier part, so each part overlaps something already placed.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::primitives::{
    contains, sample_point_in, sample_primitive, sample_rotation, DimensionRanges, PlacedPrimitive, Pose,
    PrimitiveError, PrimitiveKind,
};
use crate::rng::{hash64, stream};

pub const MAX_PARTS: usize = 5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AssemblyError {
    #[error(transparent)]
    Primitive(#[from] PrimitiveError),
    #[error("part count {0} outside 1..=5")]
    InvalidPartCount(usize),
    #[error("could not place part {part} after {attempts} attempts")]
    PlacementFailure { part: usize, attempts: u32 },
    #[error("invalid composition: {0}")]
    InvalidComposition(String),
    #[error("invalid generation config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ToyColor {
    Blue,
    Red,
    Green,
    Yellow,
}

impl ToyColor {
    pub const ALL: [ToyColor; 4] = [ToyColor::Blue, ToyColor::Red, ToyColor::Green, ToyColor::Yellow];
}

/// Which slot of the set composition a toy fills.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "type")]
pub enum Category {
    /// A single primitive of a fixed kind.
    Single { kind: PrimitiveKind },
    /// `parts` primitives of uniformly drawn kinds.
    Multi { parts: usize },
}

impl Category {
    pub fn part_count(&self) -> usize {
        match *self {
            Category::Single { .. } => 1,
            Category::Multi { parts } => parts,
        }
    }

    pub fn label(&self) -> String {
        match self {
            Category::Single { kind } => format!("single_{kind}"),
            Category::Multi { parts } => format!("multi_{parts}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToySpec {
    pub id: String,
    pub seed: u64,
    pub category: Category,
    pub color: ToyColor,
    pub parts: Vec<PlacedPrimitive>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SingleCounts {
    pub cuboid: i64,
    pub sphere: i64,
    pub cylinder: i64,
    pub ring: i64,
}

/// Number of multi-primitive toys for each part count 2..=5.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MultiCounts {
    #[serde(rename = "2")]
    pub two: i64,
    #[serde(rename = "3")]
    pub three: i64,
    #[serde(rename = "4")]
    pub four: i64,
    #[serde(rename = "5")]
    pub five: i64,
}

/// Requested number of toys per category. Counts are signed so that a
/// negative entry in a config file surfaces as `InvalidComposition` rather
/// than a parse error.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SetComposition {
    pub singles: SingleCounts,
    pub multi: MultiCounts,
}

impl SetComposition {
    /// 46 cuboids, 18 spheres, 20 cylinders, 19 rings, then 27/35/38/47
    /// toys of two to five parts: 250 in total.
    pub const fn standard() -> Self {
        Self {
            singles: SingleCounts { cuboid: 46, sphere: 18, cylinder: 20, ring: 19 },
            multi: MultiCounts { two: 27, three: 35, four: 38, five: 47 },
        }
    }

    pub const fn empty() -> Self {
        Self {
            singles: SingleCounts { cuboid: 0, sphere: 0, cylinder: 0, ring: 0 },
            multi: MultiCounts { two: 0, three: 0, four: 0, five: 0 },
        }
    }

    /// Categories paired with their counts, in generation order.
    pub fn entries(&self) -> [(Category, i64); 8] {
        use PrimitiveKind::*;
        [
            (Category::Single { kind: Cuboid }, self.singles.cuboid),
            (Category::Single { kind: Sphere }, self.singles.sphere),
            (Category::Single { kind: Cylinder }, self.singles.cylinder),
            (Category::Single { kind: Ring }, self.singles.ring),
            (Category::Multi { parts: 2 }, self.multi.two),
            (Category::Multi { parts: 3 }, self.multi.three),
            (Category::Multi { parts: 4 }, self.multi.four),
            (Category::Multi { parts: 5 }, self.multi.five),
        ]
    }

    pub fn validate(&self) -> Result<(), AssemblyError> {
        for (cat, n) in self.entries() {
            if n < 0 {
                return Err(AssemblyError::InvalidComposition(format!("{} has negative count {n}", cat.label())));
            }
        }
        Ok(())
    }

    pub fn total(&self) -> i64 {
        self.entries().iter().map(|(_, n)| n).sum()
    }

    /// The category of every toy, in index order.
    pub fn categories(&self) -> Result<Vec<Category>, AssemblyError> {
        self.validate()?;
        Ok(self
            .entries()
            .into_iter()
            .flat_map(|(cat, n)| std::iter::repeat_n(cat, n as usize))
            .collect())
    }
}

impl Default for SetComposition {
    fn default() -> Self {
        Self::standard()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GenerationConfig {
    pub ranges: DimensionRanges,
    pub composition: SetComposition,
    pub palette: Vec<ToyColor>,
    pub master_seed: u64,
    pub max_placement_attempts: u32,
}

impl Default for GenerationConfig {
    fn default() -> Self {
        Self {
            ranges: DimensionRanges::standard(),
            composition: SetComposition::standard(),
            palette: ToyColor::ALL.to_vec(),
            master_seed: 0,
            max_placement_attempts: 16,
        }
    }
}

impl GenerationConfig {
    pub fn validate(&self) -> Result<(), AssemblyError> {
        self.ranges.validate()?;
        self.composition.validate()?;
        if self.palette.is_empty() {
            return Err(AssemblyError::InvalidConfig("palette is empty".into()));
        }
        if self.max_placement_attempts == 0 {
            return Err(AssemblyError::InvalidConfig("max_placement_attempts must be at least 1".into()));
        }
        Ok(())
    }
}

fn place_parts<R: Rng + ?Sized>(
    kinds: &[PrimitiveKind],
    config: &GenerationConfig,
    rng: &mut R,
) -> Result<Vec<PlacedPrimitive>, AssemblyError> {
    let mut parts: Vec<PlacedPrimitive> = Vec::with_capacity(kinds.len());
    for (k, &kind) in kinds.iter().enumerate() {
        let spec = sample_primitive(kind, &config.ranges, rng)?;
        let rotation = sample_rotation(rng);
        if k == 0 {
            parts.push(PlacedPrimitive::new(spec, Pose::new(rotation, Default::default())));
            continue;
        }
        let mut placed = None;
        for _ in 0..config.max_placement_attempts {
            let host = &parts[rng.random_range(0..parts.len())];
            let centroid = host.pose.apply(&sample_point_in(&host.spec, rng));
            // world-frame round-off can push a boundary sample outside
            if contains(host, &centroid) {
                placed = Some(PlacedPrimitive::new(spec, Pose::new(rotation, centroid)));
                break;
            }
        }
        match placed {
            Some(p) => parts.push(p),
            None => {
                return Err(AssemblyError::PlacementFailure { part: k, attempts: config.max_placement_attempts });
            }
        }
    }
    Ok(parts)
}

/// Assembles one toy of `n_parts` primitives with kinds drawn uniformly
/// (with repetition).
pub fn assemble_toy<R: Rng + ?Sized>(
    n_parts: usize,
    config: &GenerationConfig,
    rng: &mut R,
) -> Result<ToySpec, AssemblyError> {
    if !(1..=MAX_PARTS).contains(&n_parts) {
        return Err(AssemblyError::InvalidPartCount(n_parts));
    }
    assemble_category(Category::Multi { parts: n_parts }, config, rng)
}

/// Assembles a toy for a composition slot. Single-kind categories use the
/// same sequential path with one part of the requested kind.
pub fn assemble_category<R: Rng + ?Sized>(
    category: Category,
    config: &GenerationConfig,
    rng: &mut R,
) -> Result<ToySpec, AssemblyError> {
    config.validate()?;
    let kinds: Vec<PrimitiveKind> = match category {
        Category::Single { kind } => vec![kind],
        Category::Multi { parts } => {
            if !(1..=MAX_PARTS).contains(&parts) {
                return Err(AssemblyError::InvalidPartCount(parts));
            }
            (0..parts).map(|_| PrimitiveKind::ALL[rng.random_range(0..4)]).collect()
        }
    };
    let parts = place_parts(&kinds, config, rng)?;
    let color = config.palette[rng.random_range(0..config.palette.len())];
    Ok(ToySpec { id: String::new(), seed: 0, category, color, parts })
}

pub fn toy_id(index: usize) -> String {
    format!("toy_{index:04}")
}

/// Rebuilds toy `index` of a set from its derived seed.
pub fn regenerate_toy(
    index: usize,
    category: Category,
    config: &GenerationConfig,
) -> Result<ToySpec, AssemblyError> {
    let seed = hash64(config.master_seed, index as u64);
    let mut toy = assemble_category(category, config, &mut stream(seed))?;
    toy.id = toy_id(index);
    toy.seed = seed;
    Ok(toy)
}

/// Generates the full toy set. Toy `k` uses seed `hash64(master_seed, k)`;
/// output order is by index even though toys are built in parallel.
pub fn generate_set(config: &GenerationConfig) -> Result<Vec<ToySpec>, AssemblyError> {
    config.validate()?;
    let categories = config.composition.categories()?;
    categories
        .into_par_iter()
        .enumerate()
        .map(|(k, cat)| regenerate_toy(k, cat, config))
        .collect()
}

/// True iff every part after the first has its centroid inside some
/// earlier part.
pub fn connectivity_check(toy: &ToySpec) -> bool {
    toy.parts
        .iter()
        .enumerate()
        .skip(1)
        .all(|(k, part)| toy.parts[..k].iter().any(|prev| contains(prev, &part.centroid())))
}
