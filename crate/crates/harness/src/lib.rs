//! Terrain generation, scenario configuration, experiment suites and
//! trajectory export for the receding-horizon planners.

pub mod config;
pub mod export;
pub mod suite;
pub mod terrain;

pub use config::{ModeId, ScenarioConfig, TimingId};
pub use export::{export_trajectory, TrajectoryRow};
pub use suite::{run_suite, MetricsRow, MetricsTable, SuiteEpisode, SuiteReport};
pub use terrain::{generate_terrain, TerrainClass, TerrainParams};
