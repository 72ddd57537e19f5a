//! Experiment orchestration and the outcome taxonomy tables.

use std::path::Path;

use rhp_core::model::RobotModel;
use rhp_core::oracle::{OracleModel, Scene};
use rhp_core::rhp::{run_episode, CycleOutcome, CycleSolver, EpisodeOutcome, EpisodeRecord, Guide};
use rhp_core::{PlanError, Result};
use serde::{Deserialize, Serialize};

use crate::config::ScenarioConfig;
use crate::terrain::{generate_terrain, terrain_id};

pub const EPISODE_OUTCOMES: [EpisodeOutcome; 4] = [
    EpisodeOutcome::SuccessOnline,
    EpisodeOutcome::SuccessOffline,
    EpisodeOutcome::TimeOut,
    EpisodeOutcome::FailToConverge,
];

pub const CYCLE_OUTCOMES: [CycleOutcome; 4] = [
    CycleOutcome::SuccessOnline,
    CycleOutcome::SuccessOffline,
    CycleOutcome::TimedOutButSolved,
    CycleOutcome::FailedToConverge,
];

/// One (config, terrain) run. `error` is set when the episode could not be
/// planned at all; such episodes count as failures.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteEpisode {
    pub config: String,
    pub terrain: String,
    pub record: EpisodeRecord,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub config: String,
    pub mode: String,
    pub episodes: usize,
    /// Percentages in [`EPISODE_OUTCOMES`] order.
    pub episodic: [f64; 4],
    pub cycles: usize,
    /// Percentages in [`CYCLE_OUTCOMES`] order.
    pub cycle_wise: [f64; 4],
    /// Over all cycles of all episodes [s].
    pub mean_solve_time: f64,
    pub std_solve_time: f64,
    /// Over cycles with a finite budget [s].
    pub mean_budget: f64,
    pub std_budget: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MetricsTable {
    pub rows: Vec<MetricsRow>,
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    if v.is_empty() {
        return (0.0, 0.0);
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    (mean, (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt())
}

fn percentages(counts: [usize; 4]) -> [f64; 4] {
    let total: usize = counts.iter().sum();
    counts.map(|c| if total == 0 { 0.0 } else { 100.0 * c as f64 / total as f64 })
}

impl MetricsRow {
    pub fn from_episodes(config: &str, episodes: &[&EpisodeRecord]) -> Self {
        let mut episodic = [0usize; 4];
        let mut cycle_counts = [0usize; 4];
        let mut times = Vec::new();
        let mut budgets = Vec::new();
        for e in episodes {
            episodic[EPISODE_OUTCOMES.iter().position(|&o| o == e.outcome).unwrap()] += 1;
            for c in &e.cycles {
                cycle_counts[CYCLE_OUTCOMES.iter().position(|&o| o == c.outcome).unwrap()] += 1;
                times.push(c.solve_time);
                budgets.extend(c.budget);
            }
        }
        let (mean_solve_time, std_solve_time) = mean_std(&times);
        let (mean_budget, std_budget) = mean_std(&budgets);
        Self {
            config: config.to_string(),
            mode: episodes.first().map(|e| e.mode.label()).unwrap_or_default(),
            episodes: episodes.len(),
            episodic: percentages(episodic),
            cycles: times.len(),
            cycle_wise: percentages(cycle_counts),
            mean_solve_time,
            std_solve_time,
            mean_budget,
            std_budget,
        }
    }
}

impl MetricsTable {
    /// One row per config, in first-appearance order.
    pub fn from_episodes(episodes: &[SuiteEpisode]) -> Self {
        let mut names: Vec<&str> = Vec::new();
        for e in episodes {
            if !names.contains(&e.config.as_str()) {
                names.push(&e.config);
            }
        }
        let rows = names
            .into_iter()
            .map(|name| {
                let group: Vec<&EpisodeRecord> = episodes.iter().filter(|e| e.config == name).map(|e| &e.record).collect();
                MetricsRow::from_episodes(name, &group)
            })
            .collect();
        Self { rows }
    }

    pub fn row(&self, config: &str) -> Option<&MetricsRow> {
        self.rows.iter().find(|r| r.config == config)
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["config".to_string(), "mode".into(), "episodes".into()];
        header.extend(EPISODE_OUTCOMES.iter().map(|o| format!("episodic_{o:?}_pct")));
        header.push("cycles".into());
        header.extend(CYCLE_OUTCOMES.iter().map(|o| format!("cycle_{o:?}_pct")));
        header.extend(["mean_solve_time_s", "std_solve_time_s", "mean_budget_s", "std_budget_s"].map(String::from));
        w.write_record(&header).map_err(csv_error)?;
        for r in &self.rows {
            let mut rec = vec![r.config.clone(), r.mode.clone(), r.episodes.to_string()];
            rec.extend(r.episodic.iter().map(|p| format!("{p:.2}")));
            rec.push(r.cycles.to_string());
            rec.extend(r.cycle_wise.iter().map(|p| format!("{p:.2}")));
            rec.extend([r.mean_solve_time, r.std_solve_time, r.mean_budget, r.std_budget].map(|v| format!("{v:.6}")));
            w.write_record(&rec).map_err(csv_error)?;
        }
        String::from_utf8(w.into_inner().map_err(|e| PlanError::Io(e.to_string()))?).map_err(|e| PlanError::Io(e.to_string()))
    }
}

pub(crate) fn csv_error(e: csv::Error) -> PlanError {
    PlanError::Io(e.to_string())
}

pub fn episodes_csv(episodes: &[SuiteEpisode]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "config",
        "terrain",
        "mode",
        "outcome",
        "reached_goal",
        "cycles",
        "mean_solve_time_s",
        "std_solve_time_s",
        "mean_budget_s",
        "std_budget_s",
        "error",
    ])
    .map_err(csv_error)?;
    for e in episodes {
        let r = &e.record;
        w.write_record([
            e.config.clone(),
            e.terrain.clone(),
            r.mode.label(),
            format!("{:?}", r.outcome),
            r.reached_goal.to_string(),
            r.cycles.len().to_string(),
            format!("{:.6}", r.mean_solve_time),
            format!("{:.6}", r.std_solve_time),
            format!("{:.6}", r.mean_budget),
            format!("{:.6}", r.std_budget),
            e.error.clone().unwrap_or_default(),
        ])
        .map_err(csv_error)?;
    }
    String::from_utf8(w.into_inner().map_err(|e| PlanError::Io(e.to_string()))?).map_err(|e| PlanError::Io(e.to_string()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteReport {
    pub table: MetricsTable,
    pub episodes: Vec<SuiteEpisode>,
}

/// The seeded terrain pool of a config, with start and goal states.
pub fn scenes(config: &ScenarioConfig, terrain_count: Option<usize>) -> Result<Vec<Scene>> {
    let robot = RobotModel::default();
    let count = terrain_count.unwrap_or(config.terrains) as u64;
    (0..count)
        .map(|i| {
            let seed = config.seed + i;
            let terrain = generate_terrain(config.generator, config.steps, seed, &config.terrain)?;
            Scene::new(terrain_id(config.generator, seed), terrain, &robot)
        })
        .collect()
}

/// Runs one config over its pool. Planning problems inside an episode are
/// recorded, not returned.
pub fn run_config(
    config: &ScenarioConfig,
    terrain_count: Option<usize>,
    solver: &dyn CycleSolver,
) -> Result<Vec<SuiteEpisode>> {
    config.validate()?;
    let rhp = config.rhp_config();
    let model = match &config.oracle_model {
        Some(path) if config.mode == crate::config::ModeId::Lg => Some(OracleModel::load(path)?),
        _ => None,
    };
    let guide = model.as_ref().map(|m| m as &dyn Guide);
    let mut out = Vec::new();
    for scene in scenes(config, terrain_count)? {
        let (record, error) = match run_episode(&rhp, &scene.terrain, &scene.id, &scene.x_init, &scene.goal, guide, solver) {
            Ok(r) => (r, None),
            Err(e) => (
                rhp_core::rhp::summarize(&scene.id, rhp.mode, Vec::new(), false),
                Some(e.to_string()),
            ),
        };
        let mut record = record;
        if error.is_some() {
            record.outcome = EpisodeOutcome::FailToConverge;
        }
        out.push(SuiteEpisode {
            config: config.name.clone(),
            terrain: scene.id,
            record,
            error,
        });
    }
    Ok(out)
}

/// Runs every (config, terrain) pair and, with `out_dir`, writes
/// `metrics.csv`, `episodes.csv` and `logs/<config>/<terrain>.jsonl`.
pub fn run_suite(
    configs: &[ScenarioConfig],
    terrain_count: Option<usize>,
    out_dir: Option<&Path>,
    solver: &dyn CycleSolver,
) -> Result<SuiteReport> {
    for (i, c) in configs.iter().enumerate() {
        c.validate()?;
        if configs[..i].iter().any(|o| o.name == c.name) {
            return Err(PlanError::Structure(format!("duplicate scenario name '{}'", c.name)));
        }
    }
    let mut episodes = Vec::new();
    for c in configs {
        episodes.extend(run_config(c, terrain_count, solver)?);
    }
    let table = MetricsTable::from_episodes(&episodes);
    if let Some(dir) = out_dir {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("metrics.csv"), table.to_csv()?)?;
        std::fs::write(dir.join("episodes.csv"), episodes_csv(&episodes)?)?;
        for e in &episodes {
            let logs = dir.join("logs").join(&e.config);
            std::fs::create_dir_all(&logs)?;
            std::fs::write(logs.join(format!("{}.jsonl", e.terrain)), e.record.log_lines()?)?;
        }
    }
    Ok(SuiteReport { table, episodes })
}
