use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rhp_core::model::RobotModel;
use rhp_core::relaxations::RelaxationKind;
use rhp_core::rhp::{BudgetPolicy, PlannerMode, RhpConfig, TimingMode, DEFAULT_MAX_CYCLES, DEFAULT_SECONDS_PER_WORK};
use rhp_core::solver::SolveOptions;
use rhp_core::transcription::DEFAULT_KNOTS_PER_PHASE;
use rhp_core::{PlanError, Result};
use serde::{Deserialize, Serialize};

use crate::terrain::{TerrainClass, TerrainParams};

/// Planner variant by its short name.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModeId {
    Baseline,
    MfCom,
    MfRect,
    MfPoint,
    Lg,
}

impl ModeId {
    pub const ALL: [ModeId; 5] = [ModeId::Baseline, ModeId::MfCom, ModeId::MfRect, ModeId::MfPoint, ModeId::Lg];

    pub fn name(self) -> &'static str {
        match self {
            ModeId::Baseline => "baseline",
            ModeId::MfCom => "mf-com",
            ModeId::MfRect => "mf-rect",
            ModeId::MfPoint => "mf-point",
            ModeId::Lg => "lg",
        }
    }

    pub fn planner_mode(self, epsilon: f64) -> PlannerMode {
        match self {
            ModeId::Baseline => PlannerMode::BaselineFullModel,
            ModeId::MfCom => PlannerMode::MultiFidelity(RelaxationKind::ComOnly),
            ModeId::MfRect => PlannerMode::MultiFidelity(RelaxationKind::PontonRectangular),
            ModeId::MfPoint => PlannerMode::MultiFidelity(RelaxationKind::PontonPoint),
            ModeId::Lg => PlannerMode::LocallyGuided { epsilon },
        }
    }
}

impl fmt::Display for ModeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModeId {
    type Err = PlanError;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.to_ascii_lowercase().replace('_', "-");
        ModeId::ALL
            .into_iter()
            .find(|m| m.name() == key)
            .ok_or_else(|| PlanError::Structure(format!("unknown planner mode '{s}'")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TimingId {
    /// Measured wall time of the solve call.
    Wall,
    /// Deterministic solver work scaled to seconds.
    Work,
}

/// One experiment arm: a planner configuration run over a seeded terrain pool.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    pub generator: TerrainClass,
    /// Terrain `i` of the pool uses seed `seed + i`.
    pub seed: u64,
    pub terrains: usize,
    /// Fixed step count; drawn from the generator range when absent.
    pub steps: Option<usize>,
    pub terrain: TerrainParams,
    pub mode: ModeId,
    pub ph_steps: usize,
    pub epsilon: f64,
    pub max_cycles: usize,
    pub knots_per_phase: usize,
    pub unlimited_budget: bool,
    pub timing: TimingId,
    pub seconds_per_work: f64,
    pub oracle_model: Option<PathBuf>,
    pub solver: SolveOptions,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            name: "baseline".into(),
            generator: TerrainClass::ModerateSlopes,
            seed: 0,
            terrains: 8,
            steps: None,
            terrain: TerrainParams::default(),
            mode: ModeId::Baseline,
            ph_steps: 1,
            epsilon: 0.15,
            max_cycles: DEFAULT_MAX_CYCLES,
            knots_per_phase: DEFAULT_KNOTS_PER_PHASE,
            unlimited_budget: false,
            timing: TimingId::Work,
            seconds_per_work: DEFAULT_SECONDS_PER_WORK,
            oracle_model: None,
            solver: SolveOptions::default(),
        }
    }
}

impl ScenarioConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let c: Self = toml::from_str(text).map_err(|e| PlanError::Parse(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    /// Reads a config; a relative oracle path resolves against the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let mut c = Self::from_toml(&std::fs::read_to_string(path)?)?;
        if let (Some(model), Some(dir)) = (&c.oracle_model, path.parent()) {
            if model.is_relative() {
                c.oracle_model = Some(dir.join(model));
            }
        }
        Ok(c)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| PlanError::Parse(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.name.is_empty() || self.name.contains(['/', '\\']) {
            return Err(PlanError::Structure(format!("invalid scenario name '{}'", self.name)));
        }
        if self.mode == ModeId::Lg && self.oracle_model.is_none() {
            return Err(PlanError::Structure(format!("scenario '{}' needs an oracle model", self.name)));
        }
        if self.steps == Some(0) {
            return Err(PlanError::Range("steps must be positive".into()));
        }
        self.rhp_config().validate()
    }

    pub fn rhp_config(&self) -> RhpConfig {
        let mut c = RhpConfig::new(self.mode.planner_mode(self.epsilon), self.ph_steps);
        c.max_cycles = self.max_cycles;
        c.knots_per_phase = self.knots_per_phase;
        c.solver = self.solver.clone();
        c.robot = RobotModel::default();
        c.budget_policy = if self.unlimited_budget {
            BudgetPolicy::Unlimited
        } else {
            BudgetPolicy::EhDuration
        };
        c.timing = match self.timing {
            TimingId::Wall => TimingMode::Wall,
            TimingId::Work => TimingMode::Work {
                seconds_per_unit: self.seconds_per_work,
            },
        };
        c
    }

    pub fn seeds(&self) -> impl Iterator<Item = u64> + '_ {
        (0..self.terrains as u64).map(move |i| self.seed + i)
    }
}
