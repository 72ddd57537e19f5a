mod common;

use rhp_core::model::{Foot, RobotModel};
use rhp_core::nlp::Nlp;
use rhp_core::relaxations::RelaxationKind;
use rhp_core::rhp::*;
use rhp_core::solver::{solve, SolveOptions, SolveResult, SolveStatus};
use rhp_core::transcription::evaluate_residuals;
use rhp_core::{PlanError, Result};

fn run(config: &RhpConfig, steps: usize, solver: &dyn CycleSolver) -> EpisodeRecord {
    let robot = RobotModel::default();
    let terrain = common::lane_terrain(steps, |k| 6.0 * (k % 2) as f64);
    let x0 = start_state(&terrain, &robot).unwrap();
    let goal = goal_state(&terrain, &robot).unwrap();
    run_episode(config, &terrain, "lane", &x0, &goal, None, solver).unwrap()
}

fn work_config(mode: PlannerMode, ph: usize) -> RhpConfig {
    let mut c = RhpConfig::new(mode, ph);
    c.timing = TimingMode::Work {
        seconds_per_unit: DEFAULT_SECONDS_PER_WORK,
    };
    c
}

struct AlwaysInfeasible;

impl CycleSolver for AlwaysInfeasible {
    fn solve(&self, nlp: &Nlp, options: &SolveOptions) -> Result<SolveResult> {
        let mut r = solve(nlp, &SolveOptions { max_iterations: 1, ..options.clone() })?;
        r.status = SolveStatus::Infeasible;
        Ok(r)
    }
}

/// Reports every solve as taking `seconds`.
struct Slow(f64);

impl CycleSolver for Slow {
    fn solve(&self, nlp: &Nlp, options: &SolveOptions) -> Result<SolveResult> {
        let mut r = solve(nlp, options)?;
        r.wall_time = self.0;
        Ok(r)
    }
}

#[test]
fn flat_baseline_episode_converges_every_cycle() {
    let robot = RobotModel::default();
    let terrain = common::flat_terrain(3);
    let x0 = start_state(&terrain, &robot).unwrap();
    let goal = goal_state(&terrain, &robot).unwrap();
    let config = RhpConfig::new(PlannerMode::BaselineFullModel, 1);
    let e = run_episode(&config, &terrain, "flat", &x0, &goal, None, &InteriorPoint).unwrap();
    assert_eq!(e.cycles.len(), 3);
    assert!(e.reached_goal);
    assert!(matches!(e.outcome, EpisodeOutcome::SuccessOnline | EpisodeOutcome::SuccessOffline));
    for c in &e.cycles {
        assert!(c.converged());
        let eh = c.eh_plan().unwrap();
        assert_eq!(eh.phases.len(), 3);
        assert!(evaluate_residuals(&eh, &terrain, &robot).dynamics <= 1e-5);
    }
}

#[test]
fn budget_law_and_handoff_continuity() {
    let e = run(&work_config(PlannerMode::MultiFidelity(RelaxationKind::PontonPoint), 1), 4, &InteriorPoint);
    assert_eq!(e.cycles.len(), 4);
    assert_eq!(e.cycles[0].budget, None);
    for w in e.cycles.windows(2) {
        let (prev, next) = (&w[0], &w[1]);
        assert_eq!(next.budget, Some(prev.eh_duration));
        assert_eq!(prev.eh_duration, prev.plan.as_ref().unwrap().phases[2].end_time);
        // Exact stitching of executed trajectories.
        let end = prev.eh_plan().unwrap().phases[2].states.last().copied().unwrap();
        assert_eq!(next.input.x_start, end);
        assert_eq!(next.plan.as_ref().unwrap().phases[0].states[0], end);
        assert_eq!(next.input.cursor, prev.input.cursor + 1);
        assert_eq!(next.input.swing, prev.input.swing.other());
        assert!(next.input.cursor > prev.input.cursor);
    }
    let swings: Vec<Foot> = e.cycles.iter().take(3).map(|c| c.input.swing).collect();
    assert_eq!(swings, vec![Foot::Left, Foot::Right, Foot::Left]);
}

#[test]
fn handoff_rejects_failed_cycle() {
    let e = run(&RhpConfig::new(PlannerMode::BaselineFullModel, 1), 2, &AlwaysInfeasible);
    assert_eq!(e.cycles.len(), 1);
    assert_eq!(e.outcome, EpisodeOutcome::FailToConverge);
    assert_eq!(e.cycles[0].outcome, CycleOutcome::FailedToConverge);
    assert!(matches!(handoff(&e.cycles[0]), Err(PlanError::Structure(_))));
}

#[test]
fn prediction_horizon_is_optional() {
    let robot = RobotModel::default();
    let terrain = common::flat_terrain(3);
    let x0 = start_state(&terrain, &robot).unwrap();
    let goal = goal_state(&terrain, &robot).unwrap();
    let input = initial_input(&terrain, &x0, &RhpConfig::new(PlannerMode::BaselineFullModel, 0)).unwrap();
    let short = run_cycle(&RhpConfig::new(PlannerMode::BaselineFullModel, 0), &terrain, &goal, &input, None, None, &InteriorPoint).unwrap();
    let long = run_cycle(&RhpConfig::new(PlannerMode::BaselineFullModel, 2), &terrain, &goal, &input, None, None, &InteriorPoint).unwrap();
    assert_eq!(short.surfaces_in_view.len(), 1);
    assert_eq!(long.surfaces_in_view.len(), 3);
    assert_eq!(short.plan.unwrap().phases.len(), 3);
    assert!(short.num_vars < long.num_vars);
}

#[test]
fn unlimited_policy_never_times_out() {
    let mut config = RhpConfig::new(PlannerMode::BaselineFullModel, 1);
    config.budget_policy = BudgetPolicy::Unlimited;
    let e = run(&config, 3, &Slow(100.0));
    assert!(e.cycles.iter().all(|c| c.outcome == CycleOutcome::SuccessOffline && c.budget.is_none()));
    assert_eq!(e.outcome, EpisodeOutcome::SuccessOffline);
}

#[test]
fn slow_cycles_are_solved_but_late() {
    let e = run(&RhpConfig::new(PlannerMode::BaselineFullModel, 1), 3, &Slow(100.0));
    assert_eq!(e.cycles[0].outcome, CycleOutcome::SuccessOnline);
    assert!(e.cycles[1..].iter().all(|c| c.outcome == CycleOutcome::TimedOutButSolved));
    assert_eq!(e.outcome, EpisodeOutcome::SuccessOffline);
    assert_eq!(e.mean_solve_time, 100.0);
}

#[test]
fn cycle_cap_truncates_episode() {
    let mut config = RhpConfig::new(PlannerMode::BaselineFullModel, 1);
    config.max_cycles = 2;
    let e = run(&config, 4, &InteriorPoint);
    assert_eq!(e.cycles.len(), 2);
    assert!(!e.reached_goal);
    assert_eq!(e.outcome, EpisodeOutcome::TimeOut);
}

#[test]
fn work_timing_is_deterministic() {
    let config = work_config(PlannerMode::BaselineFullModel, 1);
    let a = run(&config, 3, &InteriorPoint);
    let b = run(&config, 3, &InteriorPoint);
    assert_eq!(a.log_lines().unwrap(), b.log_lines().unwrap());
    for (x, y) in a.cycles.iter().zip(&b.cycles) {
        assert_eq!(x.plan, y.plan);
        assert_eq!(x.inputs_hash, y.inputs_hash);
        assert_eq!(x.solve_time, x.work as f64 * DEFAULT_SECONDS_PER_WORK);
    }
}

#[test]
fn replaying_a_cycle_reproduces_it() {
    let config = work_config(PlannerMode::BaselineFullModel, 1);
    let robot = RobotModel::default();
    let terrain = common::lane_terrain(3, |k| 6.0 * (k % 2) as f64);
    let goal = goal_state(&terrain, &robot).unwrap();
    let e = run(&config, 3, &InteriorPoint);
    let again = run_cycle(&config, &terrain, &goal, &e.cycles[2].input, Some(&e.cycles[1]), None, &InteriorPoint).unwrap();
    assert_eq!(again.plan, e.cycles[2].plan);
    assert_eq!(again.outcome, e.cycles[2].outcome);
    assert_eq!(again.inputs_hash, e.cycles[2].inputs_hash);
}

#[test]
fn episode_label_follows_cycle_labels() {
    let mut e = run(&work_config(PlannerMode::BaselineFullModel, 1), 2, &InteriorPoint);
    let labels = |e: &EpisodeRecord| classify_episode(&e.cycles, e.reached_goal);
    e.cycles.iter_mut().for_each(|c| c.outcome = CycleOutcome::SuccessOnline);
    assert_eq!(labels(&e), EpisodeOutcome::SuccessOnline);
    e.cycles[1].outcome = CycleOutcome::TimedOutButSolved;
    assert_eq!(labels(&e), EpisodeOutcome::SuccessOffline);
    e.reached_goal = false;
    assert_eq!(labels(&e), EpisodeOutcome::TimeOut);
    e.cycles[0].outcome = CycleOutcome::FailedToConverge;
    assert_eq!(labels(&e), EpisodeOutcome::FailToConverge);
}

#[test]
fn guided_mode_needs_a_guide() {
    let config = RhpConfig::new(PlannerMode::LocallyGuided { epsilon: 0.15 }, 0);
    let robot = RobotModel::default();
    let terrain = common::flat_terrain(2);
    let x0 = start_state(&terrain, &robot).unwrap();
    let goal = goal_state(&terrain, &robot).unwrap();
    let err = run_episode(&config, &terrain, "flat", &x0, &goal, None, &InteriorPoint).unwrap_err();
    assert!(matches!(err, PlanError::Structure(_)));
    let mut bad = config.clone();
    bad.mode = PlannerMode::LocallyGuided { epsilon: -1.0 };
    assert!(bad.validate().is_err());
}

#[test]
fn episode_log_has_one_record_per_cycle() {
    let e = run(&work_config(PlannerMode::MultiFidelity(RelaxationKind::ComOnly), 1), 2, &InteriorPoint);
    let log = e.log_lines().unwrap();
    assert_eq!(log.lines().count(), e.cycles.len());
    for line in log.lines() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        assert!(v.get("inputs_hash").is_some() && v.get("outcome").is_some());
    }
}
