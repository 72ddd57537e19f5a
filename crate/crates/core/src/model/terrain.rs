use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ContactSurface, Foot, Vec3, DEFAULT_FRICTION};
use crate::error::{PlanError, Result};

/// Contact surfaces plus the predefined surface sequence the swing foot lands on.
#[derive(Debug, Clone, PartialEq)]
pub struct Terrain {
    pub surfaces: Vec<ContactSurface>,
    /// `(left, right)` surfaces the feet stand on initially.
    pub start_surfaces: (usize, usize),
    /// Surface index for steps `1..=n`.
    pub step_sequence: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct SurfaceRecord {
    vertices: [[f64; 3]; 4],
    #[serde(default = "default_mu")]
    mu: f64,
}

fn default_mu() -> f64 {
    DEFAULT_FRICTION
}

#[derive(Serialize, Deserialize)]
struct TerrainRecord {
    surfaces: Vec<SurfaceRecord>,
    start: [usize; 2],
    steps: Vec<usize>,
}

impl Terrain {
    pub fn new(
        surfaces: Vec<ContactSurface>,
        start_surfaces: (usize, usize),
        step_sequence: Vec<usize>,
    ) -> Result<Self> {
        let terrain = Self {
            surfaces,
            start_surfaces,
            step_sequence,
        };
        terrain.validate()?;
        Ok(terrain)
    }

    pub fn validate(&self) -> Result<()> {
        let count = self.surfaces.len();
        let indices = [self.start_surfaces.0, self.start_surfaces.1]
            .into_iter()
            .chain(self.step_sequence.iter().copied());
        for index in indices {
            if index >= count {
                return Err(PlanError::MissingSurface { index, count });
            }
        }
        Ok(())
    }

    pub fn surface(&self, index: usize) -> Result<&ContactSurface> {
        self.surfaces.get(index).ok_or(PlanError::MissingSurface {
            index,
            count: self.surfaces.len(),
        })
    }

    pub fn start_surface(&self, foot: Foot) -> usize {
        match foot {
            Foot::Left => self.start_surfaces.0,
            Foot::Right => self.start_surfaces.1,
        }
    }

    pub fn step_count(&self) -> usize {
        self.step_sequence.len()
    }

    pub fn to_json(&self) -> Result<String> {
        let record = TerrainRecord {
            surfaces: self
                .surfaces
                .iter()
                .map(|s| SurfaceRecord {
                    vertices: s.vertices().map(|v| [v.x, v.y, v.z]),
                    mu: s.friction(),
                })
                .collect(),
            start: [self.start_surfaces.0, self.start_surfaces.1],
            steps: self.step_sequence.clone(),
        };
        Ok(serde_json::to_string_pretty(&record)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let record: TerrainRecord = serde_json::from_str(text)?;
        let surfaces = record
            .surfaces
            .into_iter()
            .map(|s| ContactSurface::new(s.vertices.map(|v| Vec3::new(v[0], v[1], v[2])), s.mu))
            .collect::<Result<Vec<_>>>()?;
        Self::new(surfaces, (record.start[0], record.start[1]), record.steps)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }
}
