use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rhp_core::model::{RobotModel, Terrain};
use rhp_core::oracle::{
    expert_dataset, incremental_train, load_dataset, save_dataset, train_mlp, IncrementalOptions, OracleModel, Scene,
    TrainOptions,
};
use rhp_core::rhp::{run_episode, EpisodeRecord, Guide, InteriorPoint, PlannerMode, RhpConfig};
use rhp_core::{PlanError, Result};
use rhp_harness::config::{ModeId, ScenarioConfig, TimingId};
use rhp_harness::export::export_trajectory;
use rhp_harness::suite::{run_suite, scenes};
use rhp_harness::terrain::{generate_terrain, terrain_id, TerrainClass, TerrainParams};

#[derive(Parser)]
#[command(name = "rhp", version, about = "Receding-horizon centroidal planning experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Terrain generation.
    Terrain {
        #[command(subcommand)]
        command: TerrainCommand,
    },
    /// Single-episode planning.
    Plan {
        #[command(subcommand)]
        command: PlanCommand,
    },
    /// Oracle datasets and training.
    Oracle {
        #[command(subcommand)]
        command: OracleCommand,
    },
    /// Experiment suites.
    Suite {
        #[command(subcommand)]
        command: SuiteCommand,
    },
    /// Plan one episode and write its trajectory and budget CSVs.
    Export(EpisodeArgs),
}

#[derive(Subcommand)]
enum TerrainCommand {
    /// Generate a seeded terrain as JSON.
    Gen {
        #[arg(long, default_value = "moderate-slopes")]
        class: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Subcommand)]
enum PlanCommand {
    /// Run one episode and write its cycle log.
    Episode(EpisodeArgs),
}

#[derive(Args)]
struct EpisodeArgs {
    /// Scenario file; its first terrain seed is used and the planner flags below are ignored.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Terrain JSON; generated from --class/--seed when absent.
    #[arg(long)]
    terrain: Option<PathBuf>,
    #[arg(long, default_value = "moderate-slopes")]
    class: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long, default_value = "baseline")]
    mode: String,
    #[arg(long, default_value_t = 1)]
    ph: usize,
    #[arg(long, default_value_t = 0.15)]
    epsilon: f64,
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long, default_value_t = rhp_core::rhp::DEFAULT_MAX_CYCLES)]
    max_cycles: usize,
    /// Use measured wall time instead of deterministic work.
    #[arg(long)]
    wall_time: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PoolArgs {
    #[arg(long, default_value = "moderate-slopes")]
    class: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 8)]
    count: usize,
    #[arg(long)]
    steps: Option<usize>,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long, value_delimiter = ',', default_value = "64,64,64")]
    hidden: Vec<usize>,
    #[arg(long, default_value_t = 300)]
    epochs: usize,
    #[arg(long, default_value_t = 32)]
    batch_size: usize,
    #[arg(long, default_value_t = 1e-3)]
    learning_rate: f64,
    #[arg(long, default_value_t = 0)]
    train_seed: u64,
}

impl TrainArgs {
    fn options(&self) -> TrainOptions {
        TrainOptions {
            hidden: self.hidden.clone(),
            epochs: self.epochs,
            batch_size: self.batch_size,
            learning_rate: self.learning_rate,
            seed: self.train_seed,
            ..TrainOptions::default()
        }
    }
}

#[derive(Subcommand)]
enum OracleCommand {
    /// Expert episodes on a terrain pool to a dataset.
    Extract {
        #[command(flatten)]
        pool: PoolArgs,
        /// Prediction-horizon steps of the expert.
        #[arg(long, default_value_t = 3)]
        ph: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit an oracle to a dataset.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[command(flatten)]
        train: TrainArgs,
        /// Fit a k-nearest-neighbour oracle instead of a network.
        #[arg(long)]
        knn: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Incremental training with expert recovery demonstrations.
    Augment {
        #[arg(long)]
        data: PathBuf,
        #[command(flatten)]
        pool: PoolArgs,
        #[command(flatten)]
        train: TrainArgs,
        #[arg(long, default_value_t = 3)]
        iterations: usize,
        #[arg(long, default_value_t = 0.15)]
        epsilon: f64,
        #[arg(long, default_value_t = 3)]
        expert_ph: usize,
        #[arg(long)]
        out: PathBuf,
        /// Where to write the aggregated dataset.
        #[arg(long)]
        dataset_out: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum SuiteCommand {
    /// Run scenario files and write metrics, episode tables and logs.
    Run {
        #[arg(long = "config", required = true)]
        configs: Vec<PathBuf>,
        /// Override the terrain count of every scenario.
        #[arg(long)]
        terrains: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn episode_setup(args: &EpisodeArgs) -> Result<(RhpConfig, Terrain, String, Option<OracleModel>)> {
    let scenario = match &args.config {
        Some(path) => ScenarioConfig::load(path)?,
        None => {
            let c = ScenarioConfig {
                name: "cli".into(),
                generator: args.class.parse::<TerrainClass>()?,
                seed: args.seed,
                terrains: 1,
                steps: args.steps,
                mode: args.mode.parse::<ModeId>()?,
                ph_steps: args.ph,
                epsilon: args.epsilon,
                max_cycles: args.max_cycles,
                timing: if args.wall_time { TimingId::Wall } else { TimingId::Work },
                oracle_model: args.model.clone(),
                ..ScenarioConfig::default()
            };
            c.validate()?;
            c
        }
    };
    let (terrain, id) = match &args.terrain {
        Some(path) => (Terrain::load(path)?, path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()),
        None => (
            generate_terrain(scenario.generator, scenario.steps, scenario.seed, &scenario.terrain)?,
            terrain_id(scenario.generator, scenario.seed),
        ),
    };
    let model = match (&scenario.oracle_model, scenario.mode) {
        (Some(p), ModeId::Lg) => Some(OracleModel::load(p)?),
        _ => None,
    };
    Ok((scenario.rhp_config(), terrain, id, model))
}

fn plan(args: &EpisodeArgs) -> Result<(EpisodeRecord, String)> {
    let (config, terrain, id, model) = episode_setup(args)?;
    let robot = RobotModel::default();
    let scene = Scene::new(id.clone(), terrain, &robot)?;
    let guide = model.as_ref().map(|m| m as &dyn Guide);
    let e = run_episode(&config, &scene.terrain, &id, &scene.x_init, &scene.goal, guide, &InteriorPoint)?;
    println!(
        "{id}: {:?}, {} cycles, mean solve time {:.4} s",
        e.outcome,
        e.cycles.len(),
        e.mean_solve_time
    );
    Ok((e, id))
}

fn pool(args: &PoolArgs) -> Result<Vec<Scene>> {
    let c = ScenarioConfig {
        generator: args.class.parse()?,
        seed: args.seed,
        terrains: args.count,
        steps: args.steps,
        ..ScenarioConfig::default()
    };
    scenes(&c, None)
}

fn write_parent(path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Terrain {
            command: TerrainCommand::Gen { class, seed, steps, out },
        } => {
            let t = generate_terrain(class.parse()?, steps, seed, &TerrainParams::default())?;
            write_parent(&out)?;
            t.save(&out)?;
            println!("{} surfaces, {} steps -> {}", t.surfaces.len(), t.step_count(), out.display());
        }
        Command::Plan {
            command: PlanCommand::Episode(args),
        } => {
            let (e, id) = plan(&args)?;
            std::fs::create_dir_all(&args.out)?;
            std::fs::write(args.out.join(format!("{id}.jsonl")), e.log_lines()?)?;
        }
        Command::Export(args) => {
            let (e, id) = plan(&args)?;
            match export_trajectory(&e, &args.out, &id) {
                Ok(rows) => println!("{} trajectory rows -> {}", rows.len(), args.out.display()),
                // Nothing executed is a planning result, not a structural error.
                Err(PlanError::Structure(msg)) => println!("nothing exported: {msg}"),
                Err(err) => return Err(err),
            }
        }
        Command::Oracle { command } => match command {
            OracleCommand::Extract { pool: p, ph, out } => {
                let expert = RhpConfig::new(PlannerMode::BaselineFullModel, ph);
                let (samples, diagnostics) = expert_dataset(&pool(&p)?, &expert, &InteriorPoint)?;
                diagnostics.iter().for_each(|d| eprintln!("{d}"));
                write_parent(&out)?;
                save_dataset(&out, &samples)?;
                println!("{} samples -> {}", samples.len(), out.display());
            }
            OracleCommand::Train { data, train, knn, out } => {
                let samples = load_dataset(&data)?;
                let model = match knn {
                    Some(k) => OracleModel::fit_knn(&samples, k)?,
                    None => {
                        let (m, report) = train_mlp(&samples, &train.options())?;
                        println!(
                            "loss {:.4e} -> {:.4e}, best validation {:.4e} at epoch {}",
                            report.initial_train_loss, report.final_train_loss, report.best_validation_loss, report.best_epoch
                        );
                        m
                    }
                };
                write_parent(&out)?;
                model.save(&out)?;
            }
            OracleCommand::Augment {
                data,
                pool: p,
                train,
                iterations,
                epsilon,
                expert_ph,
                out,
                dataset_out,
            } => {
                let initial = load_dataset(&data)?;
                let options = IncrementalOptions {
                    iterations,
                    min_iterations: iterations,
                    train: train.options(),
                    learner: RhpConfig::new(PlannerMode::LocallyGuided { epsilon }, 0),
                    expert: RhpConfig::new(PlannerMode::BaselineFullModel, expert_ph),
                    ..IncrementalOptions::default()
                };
                let run = incremental_train(&initial, &pool(&p)?, &options, &InteriorPoint)?;
                for (i, it) in run.iterations.iter().enumerate() {
                    println!(
                        "iteration {}: {} samples, success {:.1}%, {} added",
                        i + 1,
                        it.dataset_size,
                        it.success_rate,
                        it.added
                    );
                }
                run.diagnostics.iter().for_each(|d| eprintln!("{d}"));
                write_parent(&out)?;
                run.model.save(&out)?;
                if let Some(path) = dataset_out {
                    write_parent(&path)?;
                    save_dataset(&path, &run.dataset)?;
                }
            }
        },
        Command::Suite {
            command: SuiteCommand::Run { configs, terrains, out },
        } => {
            let configs: Vec<ScenarioConfig> = configs.iter().map(|p| ScenarioConfig::load(p)).collect::<Result<_>>()?;
            let report = run_suite(&configs, terrains, Some(&out), &InteriorPoint)?;
            print!("{}", report.table.to_csv()?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
