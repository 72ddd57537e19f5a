//! Seeded stepping-stone terrains.
//!
//! Two lanes of square patches along +x; patch row `k` holds surfaces `2k`
//! (left lane) and `2k + 1` (right lane). Row 0 is the start stance; step `i`
//! lands on row `i/2 + 1` of its swing lane, swinging the left foot first.

use std::fmt;
use std::str::FromStr;

use nalgebra::{Matrix3, Rotation3, Unit};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rhp_core::model::{ContactSurface, Foot, Terrain, Vec3};
use rhp_core::{PlanError, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TerrainClass {
    Flat,
    ModerateSlopes,
    LargeSlope,
    UpDownHill,
    VShape,
}

impl TerrainClass {
    pub const ALL: [TerrainClass; 5] = [
        TerrainClass::Flat,
        TerrainClass::ModerateSlopes,
        TerrainClass::LargeSlope,
        TerrainClass::UpDownHill,
        TerrainClass::VShape,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TerrainClass::Flat => "flat",
            TerrainClass::ModerateSlopes => "moderate-slopes",
            TerrainClass::LargeSlope => "large-slope",
            TerrainClass::UpDownHill => "up-down-hill",
            TerrainClass::VShape => "v-shape",
        }
    }
}

impl fmt::Display for TerrainClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TerrainClass {
    type Err = PlanError;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.to_ascii_lowercase().replace('_', "-");
        let alias = match key.as_str() {
            "moderate" => "moderate-slopes",
            "large" => "large-slope",
            "hill" | "up-down" => "up-down-hill",
            "v" | "vshape" => "v-shape",
            other => other,
        };
        TerrainClass::ALL
            .into_iter()
            .find(|c| c.name() == alias)
            .ok_or_else(|| PlanError::Structure(format!("unknown terrain class '{s}'")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TerrainParams {
    /// Patch side length [m].
    pub patch_size: f64,
    /// Gap between neighbouring patches [m].
    pub gap: f64,
    pub friction: f64,
    /// Step count range used when no explicit length is given.
    pub min_steps: usize,
    pub max_steps: usize,
    /// Largest height jump allowed between facing patch edges [m].
    pub max_discontinuity: f64,
}

impl Default for TerrainParams {
    fn default() -> Self {
        Self {
            patch_size: 0.4,
            gap: 0.05,
            friction: 0.5,
            min_steps: 6,
            max_steps: 10,
            max_discontinuity: 0.1,
        }
    }
}

impl TerrainParams {
    fn pitch(&self) -> f64 {
        self.patch_size + self.gap
    }
}

pub const MODERATE_DEG: (f64, f64) = (5.0, 12.0);
pub const LARGE_DEG: (f64, f64) = (17.0, 25.0);
const HILL_DEG: (f64, f64) = (5.0, 10.0);
const MAX_ATTEMPTS: usize = 1000;

/// Rotation tilting +z by `deg` towards the horizontal direction `heading`;
/// the patch then descends along `heading`.
fn tilt(heading: f64, deg: f64) -> Matrix3<f64> {
    let axis = Unit::new_normalize(Vec3::new(-heading.sin(), heading.cos(), 0.0));
    *Rotation3::from_axis_angle(&axis, deg.to_radians()).matrix()
}

fn uniform_deg(rng: &mut ChaCha8Rng, range: (f64, f64)) -> f64 {
    rng.random_range(range.0..=range.1)
}

fn random_tilt(rng: &mut ChaCha8Rng, range: (f64, f64)) -> Matrix3<f64> {
    let deg = uniform_deg(rng, range);
    tilt(rng.random_range(0.0..std::f64::consts::TAU), deg)
}

/// Surface index of every step, left foot first.
pub fn step_sequence(steps: usize) -> Vec<usize> {
    (0..steps)
        .map(|i| {
            let foot = if i % 2 == 0 { Foot::Left } else { Foot::Right };
            2 * (i / 2 + 1) + foot.index()
        })
        .collect()
}

fn rows_for(steps: usize) -> usize {
    steps / 2 + 2
}

/// Orientation of each patch, `[left, right]` per row.
fn draw_tilts(class: TerrainClass, rows: usize, steps: usize, rng: &mut ChaCha8Rng) -> Vec<[Matrix3<f64>; 2]> {
    let flat = Matrix3::identity();
    match class {
        TerrainClass::Flat => vec![[flat; 2]; rows],
        TerrainClass::ModerateSlopes => (0..rows).map(|_| [random_tilt(rng, MODERATE_DEG), random_tilt(rng, MODERATE_DEG)]).collect(),
        TerrainClass::LargeSlope => {
            let mut tilts: Vec<[Matrix3<f64>; 2]> =
                (0..rows).map(|_| [random_tilt(rng, MODERATE_DEG), random_tilt(rng, MODERATE_DEG)]).collect();
            let target = step_sequence(steps)[rng.random_range(0..steps)];
            // Uphill or downhill along the walking direction.
            let heading = if rng.random_bool(0.5) { 0.0 } else { std::f64::consts::PI };
            tilts[target / 2][target % 2] = tilt(heading, uniform_deg(rng, LARGE_DEG));
            tilts
        }
        TerrainClass::UpDownHill => {
            let deg = uniform_deg(rng, HILL_DEG);
            let top = rows / 2;
            (0..rows)
                .map(|k| {
                    let r = match k {
                        0 => flat,
                        _ if k < top => tilt(std::f64::consts::PI, deg),
                        _ if k == top => flat,
                        _ => tilt(0.0, deg),
                    };
                    [r; 2]
                })
                .collect()
        }
        TerrainClass::VShape => {
            let deg = uniform_deg(rng, MODERATE_DEG);
            let inward = std::f64::consts::FRAC_PI_2;
            (0..rows).map(|_| [tilt(-inward, deg), tilt(inward, deg)]).collect()
        }
    }
}

fn assemble(tilts: &[[Matrix3<f64>; 2]], steps: usize, params: &TerrainParams) -> Result<Terrain> {
    let half = 0.5 * params.patch_size;
    let lane = 0.5 * params.pitch();
    let corners = [(-half, -half), (half, -half), (half, half), (-half, half)].map(|(x, y)| Vec3::new(x, y, 0.0));
    let mut surfaces = Vec::with_capacity(2 * tilts.len());
    let mut height = 0.0;
    for (k, row) in tilts.iter().enumerate() {
        if k > 0 {
            // Match the mean heights of the facing edge midpoints.
            let prev = &tilts[k - 1];
            let rise: f64 = (0..2)
                .map(|l| (prev[l] * Vec3::new(half, 0.0, 0.0)).z - (row[l] * Vec3::new(-half, 0.0, 0.0)).z)
                .sum::<f64>()
                / 2.0;
            height += rise;
        }
        for (l, side) in [1.0, -1.0].into_iter().enumerate() {
            let c = Vec3::new(k as f64 * params.pitch(), side * lane, height);
            surfaces.push(ContactSurface::new(corners.map(|p| c + row[l] * p), params.friction)?);
        }
    }
    Terrain::new(surfaces, (0, 1), step_sequence(steps))
}

/// Largest height jump between facing edges of neighbouring patches, for
/// terrains laid out by [`generate_terrain`].
pub fn max_height_discontinuity(terrain: &Terrain) -> f64 {
    let rows = terrain.surfaces.len() / 2;
    let z = |s: usize, v: usize| terrain.surfaces[s].vertices()[v].z;
    let mut worst: f64 = 0.0;
    for k in 0..rows {
        let (left, right) = (2 * k, 2 * k + 1);
        // Across lanes: the left lane's -y edge faces the right lane's +y edge.
        worst = worst.max((z(left, 0) - z(right, 3)).abs()).max((z(left, 1) - z(right, 2)).abs());
        if k + 1 < rows {
            for s in [left, right] {
                let n = s + 2;
                worst = worst.max((z(s, 1) - z(n, 0)).abs()).max((z(s, 2) - z(n, 3)).abs());
            }
        }
    }
    worst
}

/// Generates a terrain of `steps` steps, or a random length in
/// `[min_steps, max_steps]` when `steps` is `None`. Deterministic per seed.
pub fn generate_terrain(class: TerrainClass, steps: Option<usize>, seed: u64, params: &TerrainParams) -> Result<Terrain> {
    if steps == Some(0) || params.min_steps == 0 || params.min_steps > params.max_steps {
        return Err(PlanError::Range("terrains need at least one step".into()));
    }
    if !(params.patch_size > 0.0 && params.gap >= 0.0 && params.friction > 0.0) {
        return Err(PlanError::Range("patch size and friction must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let steps = steps.unwrap_or_else(|| rng.random_range(params.min_steps..=params.max_steps));
    for _ in 0..MAX_ATTEMPTS {
        let tilts = draw_tilts(class, rows_for(steps), steps, &mut rng);
        let terrain = assemble(&tilts, steps, params)?;
        if max_height_discontinuity(&terrain) <= params.max_discontinuity {
            return Ok(terrain);
        }
    }
    Err(PlanError::Structure(format!(
        "no {class} terrain within the height discontinuity bound after {MAX_ATTEMPTS} draws"
    )))
}

/// Stable identifier of a generated terrain.
pub fn terrain_id(class: TerrainClass, seed: u64) -> String {
    format!("{class}-{seed}")
}
