//! Receding-horizon loop: one NLP per cycle (execution horizon plus
//! prediction horizon), perfect-tracking handoff, time budgets and outcome
//! bookkeeping.

use std::hash::{DefaultHasher, Hash, Hasher};

use serde::{Deserialize, Serialize};

use crate::error::{PlanError, Result};
use crate::model::{CentroidalState, Foot, Footstep, RobotModel, Terrain, Vec3};
use crate::nlp::Nlp;
use crate::oracle::{build_lg_problem, LocalObjective};
use crate::relaxations::{relaxed_step, RelaxationKind};
use crate::solver::{self, SolveOptions, SolveResult, SolveStatus};
use crate::transcription::{
    build, default_start_feet, CostWeights, MotionPlan, PhaseModel, ProblemSpec, StepSpec, StepTiming, TerminalCost,
    DEFAULT_KNOTS_PER_PHASE, DEFAULT_PHASE_DURATION, MIN_PHASE_DURATION,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum PlannerMode {
    BaselineFullModel,
    MultiFidelity(RelaxationKind),
    /// Execution horizon only, steered by a learned local objective.
    LocallyGuided { epsilon: f64 },
}

impl PlannerMode {
    pub fn label(&self) -> String {
        match self {
            Self::BaselineFullModel => "Baseline".into(),
            Self::MultiFidelity(k) => format!("MF-{}", k.name()),
            Self::LocallyGuided { epsilon } => format!("LG-eps{epsilon}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BudgetPolicy {
    /// Budget of a cycle is the executed duration of the previous cycle's plan.
    EhDuration,
    Unlimited,
}

/// How solve time is measured.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum TimingMode {
    Wall,
    /// Deterministic: the solver's operation count times a fixed rate.
    Work { seconds_per_unit: f64 },
}

/// Rough calibration of the solver's work counter on a desktop core.
pub const DEFAULT_SECONDS_PER_WORK: f64 = 2e-9;
pub const DEFAULT_MAX_CYCLES: usize = 28;
/// Terminal cost multiplier once the execution horizon reaches the last surface.
pub const FINAL_TERMINAL_SCALE: f64 = 10.0;
const T_MAX_PER_STEP: f64 = 1.2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RhpConfig {
    pub mode: PlannerMode,
    /// Steps in the prediction horizon (ignored for locally guided planning).
    pub ph_steps: usize,
    pub budget_policy: BudgetPolicy,
    pub max_cycles: usize,
    pub knots_per_phase: usize,
    pub swing_first: Foot,
    pub timing: TimingMode,
    pub solver: SolveOptions,
    pub robot: RobotModel,
}

impl RhpConfig {
    pub fn new(mode: PlannerMode, ph_steps: usize) -> Self {
        Self {
            mode,
            ph_steps,
            budget_policy: BudgetPolicy::EhDuration,
            max_cycles: DEFAULT_MAX_CYCLES,
            knots_per_phase: DEFAULT_KNOTS_PER_PHASE,
            swing_first: Foot::Left,
            timing: TimingMode::Wall,
            solver: SolveOptions::default(),
            robot: RobotModel::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.solver.validate()?;
        if self.max_cycles == 0 || self.knots_per_phase == 0 {
            return Err(PlanError::Range("max_cycles and knots_per_phase must be positive".into()));
        }
        if let PlannerMode::LocallyGuided { epsilon } = self.mode {
            if !(epsilon >= 0.0 && epsilon.is_finite()) {
                return Err(PlanError::Range("epsilon must be non-negative".into()));
            }
        }
        if let TimingMode::Work { seconds_per_unit } = self.timing {
            if !(seconds_per_unit > 0.0 && seconds_per_unit.is_finite()) {
                return Err(PlanError::Range("seconds_per_unit must be positive".into()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CycleOutcome {
    SuccessOnline,
    /// Converged while no budget applies.
    SuccessOffline,
    TimedOutButSolved,
    FailedToConverge,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EpisodeOutcome {
    SuccessOnline,
    SuccessOffline,
    /// Cycle cap reached before the last surface.
    TimeOut,
    FailToConverge,
}

/// Where a cycle starts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CycleInput {
    pub index: usize,
    /// Index into the terrain's step sequence of the surface this cycle steps onto.
    pub cursor: usize,
    pub x_start: CentroidalState,
    pub feet: [Footstep; 2],
    pub swing: Foot,
}

impl CycleInput {
    pub fn stance(&self) -> Foot {
        self.swing.other()
    }
}

/// Everything a guide sees when asked for a local objective.
#[derive(Debug, Clone, Copy)]
pub struct CycleContext<'a> {
    pub terrain: &'a Terrain,
    pub input: &'a CycleInput,
    pub goal: &'a CentroidalState,
}

/// Source of local objectives for locally guided planning.
pub trait Guide {
    fn local_objective(&self, ctx: &CycleContext) -> Result<LocalObjective>;
}

/// The NLP solver used by the loop; replaceable for fault injection.
pub trait CycleSolver {
    fn solve(&self, nlp: &Nlp, options: &SolveOptions) -> Result<SolveResult>;
}

/// The in-repo interior-point solver.
#[derive(Debug, Clone, Copy, Default)]
pub struct InteriorPoint;

impl CycleSolver for InteriorPoint {
    fn solve(&self, nlp: &Nlp, options: &SolveOptions) -> Result<SolveResult> {
        solver::solve(nlp, options)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CycleRecord {
    pub input: CycleInput,
    /// Step-sequence surfaces in this cycle's horizon.
    pub surfaces_in_view: Vec<usize>,
    pub num_vars: usize,
    pub status: SolveStatus,
    pub iterations: usize,
    pub objective: f64,
    /// Measured per the configured timing mode [s].
    pub solve_time: f64,
    pub wall_time: f64,
    pub work: u64,
    /// `None` when unlimited.
    pub budget: Option<f64>,
    /// Executed duration (end of the first step) [s]; zero when not converged.
    pub eh_duration: f64,
    pub outcome: CycleOutcome,
    pub inputs_hash: u64,
    /// Solved horizon, present when converged.
    pub plan: Option<MotionPlan>,
}

impl CycleRecord {
    pub fn converged(&self) -> bool {
        self.status == SolveStatus::Converged
    }

    /// The executed part of the plan: the first step.
    pub fn eh_plan(&self) -> Option<MotionPlan> {
        self.plan.as_ref().map(|p| p.truncated(1))
    }

    pub fn eh_terminal_state(&self) -> Option<CentroidalState> {
        self.plan.as_ref().and_then(|p| p.step_terminal_state(0))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub terrain_id: String,
    pub mode: PlannerMode,
    pub cycles: Vec<CycleRecord>,
    pub outcome: EpisodeOutcome,
    pub reached_goal: bool,
    pub mean_solve_time: f64,
    pub std_solve_time: f64,
    /// Mean over cycles with a finite budget; zero when there are none.
    pub mean_budget: f64,
    pub std_budget: f64,
}

impl EpisodeRecord {
    /// One JSON object per cycle, with its start input but without the solved plans.
    pub fn log_lines(&self) -> Result<String> {
        let mut out = String::new();
        for c in &self.cycles {
            let entry = serde_json::json!({
                "terrain": self.terrain_id,
                "mode": self.mode.label(),
                "cycle": c.input.index,
                "cursor": c.input.cursor,
                "swing": c.input.swing,
                "inputs_hash": format!("{:016x}", c.inputs_hash),
                "status": c.status,
                "outcome": c.outcome,
                "iterations": c.iterations,
                "objective": c.objective,
                "solve_time": c.solve_time,
                "work": c.work,
                "budget": c.budget,
                "eh_duration": c.eh_duration,
                "input": c.input,
            });
            out.push_str(&serde_json::to_string(&entry).map_err(|e| PlanError::Parse(e.to_string()))?);
            out.push('\n');
        }
        Ok(out)
    }
}

/// CoM above the midpoint of the last two step surfaces, at nominal height, at rest.
pub fn goal_state(terrain: &Terrain, robot: &RobotModel) -> Result<CentroidalState> {
    let n = terrain.step_sequence.len();
    if n == 0 {
        return Err(PlanError::Structure("terrain has no steps".into()));
    }
    let a = terrain.surface(terrain.step_sequence[n - 1])?.center();
    let b = if n >= 2 {
        terrain.surface(terrain.step_sequence[n - 2])?.center()
    } else {
        a
    };
    Ok(CentroidalState::at_rest(0.5 * (a + b) + Vec3::new(0.0, 0.0, robot.nominal_com_height)))
}

/// CoM above the midpoint of the default start feet, at rest.
pub fn start_state(terrain: &Terrain, robot: &RobotModel) -> Result<CentroidalState> {
    let feet = default_start_feet(terrain)?;
    let mid = 0.5 * (feet[0].position + feet[1].position);
    Ok(CentroidalState::at_rest(mid + Vec3::new(0.0, 0.0, robot.nominal_com_height)))
}

pub fn initial_input(terrain: &Terrain, x_init: &CentroidalState, config: &RhpConfig) -> Result<CycleInput> {
    Ok(CycleInput {
        index: 0,
        cursor: 0,
        x_start: *x_init,
        feet: default_start_feet(terrain)?,
        swing: config.swing_first,
    })
}

fn phase_durations(plan: &MotionPlan, step: usize) -> Option<[f64; 3]> {
    let ph = plan.phases.get(3 * step..3 * step + 3)?;
    Some(std::array::from_fn(|j| ph[j].end_time - ph[j].start_time))
}

fn hash_inputs(spec: &ProblemSpec, warm: &[f64], mode: &PlannerMode) -> u64 {
    let mut h = DefaultHasher::new();
    format!("{spec:?}{mode:?}").hash(&mut h);
    for v in warm {
        v.to_bits().hash(&mut h);
    }
    h.finish()
}

/// Solves one cycle from `input`. `previous` is the prior cycle (warm start
/// and budget); `guide` is required for locally guided planning.
pub fn run_cycle(
    config: &RhpConfig,
    terrain: &Terrain,
    goal: &CentroidalState,
    input: &CycleInput,
    previous: Option<&CycleRecord>,
    guide: Option<&dyn Guide>,
    solver: &dyn CycleSolver,
) -> Result<CycleRecord> {
    config.validate()?;
    let remaining = terrain.step_sequence.len().checked_sub(input.cursor).filter(|r| *r > 0).ok_or_else(|| {
        PlanError::Structure(format!("cursor {} is past the last step", input.cursor))
    })?;
    let robot = &config.robot;
    let warm_plan = previous.and_then(|p| p.plan.as_ref());
    let last_cycle = remaining == 1;

    let problem = match config.mode {
        PlannerMode::LocallyGuided { epsilon } => {
            let guide = guide.ok_or_else(|| PlanError::Structure("locally guided planning needs a guide".into()))?;
            let objective = guide.local_objective(&CycleContext { terrain, input, goal })?;
            build_lg_problem(
                &objective,
                epsilon,
                &input.x_start,
                input.feet,
                input.swing,
                terrain.step_sequence[input.cursor],
                terrain,
                robot,
                config.knots_per_phase,
            )?
        }
        mode => {
            let ph = config.ph_steps.min(remaining - 1);
            let mut steps = Vec::with_capacity(1 + ph);
            let mut swing = input.swing;
            for i in 0..=ph {
                let surface = terrain.step_sequence[input.cursor + i];
                let step = match (mode, i) {
                    (PlannerMode::MultiFidelity(kind), i) if i > 0 => {
                        let d = warm_plan
                            .and_then(|p| phase_durations(p, i + 1).or_else(|| phase_durations(p, p.num_steps() - 1)))
                            .unwrap_or([DEFAULT_PHASE_DURATION; 3]);
                        relaxed_step(kind, swing, surface, d)
                    }
                    _ => StepSpec {
                        swing,
                        surface,
                        model: PhaseModel::Full,
                        timing: StepTiming::Free,
                    },
                };
                steps.push(step);
                swing = swing.other();
            }
            let mut terminal = TerminalCost::to_state(*goal);
            if last_cycle {
                terminal.weight *= FINAL_TERMINAL_SCALE;
            }
            let spec = ProblemSpec {
                knots_per_phase: config.knots_per_phase,
                t_max: T_MAX_PER_STEP * steps.len() as f64,
                min_phase_duration: MIN_PHASE_DURATION,
                default_phase_duration: DEFAULT_PHASE_DURATION,
                x_init: input.x_start,
                feet: input.feet,
                steps,
                terminal,
                weights: CostWeights::default(),
            };
            build(&spec, terrain, robot)?
        }
    };

    let warm = match warm_plan {
        Some(plan) => problem.guess_from_plan(plan, 1),
        None => problem.default_guess(),
    };
    let inputs_hash = hash_inputs(&problem.spec, &warm, &config.mode);
    let mut options = config.solver.clone();
    options.warm_start = Some(warm);
    let mut result = solver.solve(&problem.nlp, &options)?;
    let (mut wall_time, mut work, mut iterations) = (result.wall_time, result.work, result.iterations);
    // A shifted plan can start far from feasibility; retry once from the
    // cold-start guess and charge both attempts to the cycle.
    if result.status != SolveStatus::Converged && warm_plan.is_some() {
        options.warm_start = Some(problem.default_guess());
        result = solver.solve(&problem.nlp, &options)?;
        wall_time += result.wall_time;
        work += result.work;
        iterations += result.iterations;
    }

    let solve_time = match config.timing {
        TimingMode::Wall => wall_time,
        TimingMode::Work { seconds_per_unit } => work as f64 * seconds_per_unit,
    };
    let budget = match config.budget_policy {
        BudgetPolicy::Unlimited => None,
        BudgetPolicy::EhDuration => previous.map(|p| p.eh_duration),
    };
    let converged = result.status == SolveStatus::Converged;
    let outcome = match (converged, config.budget_policy, budget) {
        (false, _, _) => CycleOutcome::FailedToConverge,
        (true, BudgetPolicy::Unlimited, _) => CycleOutcome::SuccessOffline,
        (true, _, Some(b)) if solve_time > b => CycleOutcome::TimedOutButSolved,
        (true, _, _) => CycleOutcome::SuccessOnline,
    };
    let plan = converged.then(|| problem.extract_plan(&result.solution));
    Ok(CycleRecord {
        input: *input,
        surfaces_in_view: problem.spec.steps.iter().map(|s| s.surface).collect(),
        num_vars: problem.num_vars(),
        status: result.status,
        iterations,
        objective: result.objective,
        solve_time,
        wall_time,
        work,
        budget,
        eh_duration: plan.as_ref().map_or(0.0, |p| p.first_step_duration()),
        outcome,
        inputs_hash,
        plan,
    })
}

/// Start of the next cycle under perfect tracking.
pub fn handoff(previous: &CycleRecord) -> Result<CycleInput> {
    let plan = previous
        .plan
        .as_ref()
        .filter(|_| previous.converged())
        .ok_or_else(|| PlanError::Structure("handoff from a cycle that did not converge".into()))?;
    let x_start = plan
        .step_terminal_state(0)
        .ok_or_else(|| PlanError::Structure("plan has no executed step".into()))?;
    Ok(CycleInput {
        index: previous.input.index + 1,
        cursor: previous.input.cursor + 1,
        x_start,
        feet: plan.feet_after(1),
        swing: previous.input.swing.other(),
    })
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Episode label from the cycle labels.
pub fn classify_episode(cycles: &[CycleRecord], reached_goal: bool) -> EpisodeOutcome {
    if cycles.iter().any(|c| c.outcome == CycleOutcome::FailedToConverge) {
        EpisodeOutcome::FailToConverge
    } else if !reached_goal {
        EpisodeOutcome::TimeOut
    } else if cycles.iter().all(|c| c.outcome == CycleOutcome::SuccessOnline) {
        EpisodeOutcome::SuccessOnline
    } else {
        EpisodeOutcome::SuccessOffline
    }
}

/// Runs cycles until the last surface is reached, a cycle fails, or the cycle cap.
pub fn run_episode(
    config: &RhpConfig,
    terrain: &Terrain,
    terrain_id: &str,
    x_init: &CentroidalState,
    goal: &CentroidalState,
    guide: Option<&dyn Guide>,
    solver: &dyn CycleSolver,
) -> Result<EpisodeRecord> {
    config.validate()?;
    let mut cycles: Vec<CycleRecord> = Vec::new();
    let mut input = initial_input(terrain, x_init, config)?;
    while cycles.len() < config.max_cycles && input.cursor < terrain.step_sequence.len() {
        let record = run_cycle(config, terrain, goal, &input, cycles.last(), guide, solver)?;
        let ok = record.converged();
        if ok {
            input = handoff(&record)?;
        }
        cycles.push(record);
        if !ok {
            break;
        }
    }
    Ok(summarize(terrain_id, config.mode, cycles, input.cursor >= terrain.step_sequence.len()))
}

pub fn summarize(terrain_id: &str, mode: PlannerMode, cycles: Vec<CycleRecord>, reached_goal: bool) -> EpisodeRecord {
    let times: Vec<f64> = cycles.iter().map(|c| c.solve_time).collect();
    let budgets: Vec<f64> = cycles.iter().filter_map(|c| c.budget).collect();
    let (mean_solve_time, std_solve_time) = mean_std(&times);
    let (mean_budget, std_budget) = mean_std(&budgets);
    EpisodeRecord {
        terrain_id: terrain_id.to_string(),
        mode,
        outcome: classify_episode(&cycles, reached_goal),
        cycles,
        reached_goal,
        mean_solve_time,
        std_solve_time,
        mean_budget,
        std_budget,
    }
}
