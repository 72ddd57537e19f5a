//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Runs as a plain binary so criteria execute one after another and wall-clock
//! timings are not disturbed by concurrent tests. `ACCEPTANCE_ONLY=5,6` limits
//! the run to selected criteria.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use nalgebra::{Matrix3, Rotation3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rhp_core::expr::Convexity;
use rhp_core::model::{on_surface_point, CentroidalState, Foot, RobotModel, Terrain, Vec3};
use rhp_core::nlp::derivative_check;
use rhp_core::oracle::{
    build_lg_problem, extract_samples, incremental_train, stance_frame, train_mlp, IncrementalOptions, LocalObjective,
    OracleInput, OracleModel, OracleSample, Scene, TrainOptions,
};
use rhp_core::relaxations::{build_prediction_horizon, projection_violation, PredictionTail, RelaxationKind};
use rhp_core::rhp::{
    classify_episode, handoff, run_cycle, run_episode, CycleContext, CycleInput, EpisodeRecord, Guide, InteriorPoint,
    PlannerMode, RhpConfig, TimingMode, DEFAULT_SECONDS_PER_WORK,
};
use rhp_core::solver::{solve, SolveOptions, SolveStatus};
use rhp_core::transcription::{build_baseline, default_start_feet, evaluate_residuals, HorizonSpec, TranscribedProblem};
use rhp_harness::config::{ModeId, ScenarioConfig, TimingId};
use rhp_harness::suite::{run_suite, scenes};
use rhp_harness::terrain::{generate_terrain, TerrainClass, TerrainParams};

// Tolerances and pool sizes.
const FEASIBILITY_TOL: f64 = 1e-5;
const DERIVATIVE_TOL: f64 = 1e-5;
const DERIVATIVE_POINTS: usize = 20;
const PROJECTION_TOL: f64 = 1e-8;
const PROJECTION_SOLVE_TOL: f64 = 1e-10;
const SPEEDUP_MIN_RATIO: f64 = 1.2;
const LG_MEDIAN_MAX_FRACTION: f64 = 0.5;
const ALPHA_ROUND_TRIP_TOL: f64 = 1e-7;
const PARTITION_TOL: f64 = 0.1;
const SPEED_POOL: (u64, usize) = (100, 8);
const TRAINING_POOL: (u64, usize) = (1000, 12);
const AUGMENT_POOL: (u64, usize) = (2000, 10);
const AUGMENT_SEED_POOL: usize = 4;
const LARGE_SLOPE_SEEDS: std::ops::Range<u64> = 200..230;
const BOOKKEEPING_POOL: (u64, usize) = (300, 5);

struct Line {
    id: usize,
    name: &'static str,
    pass: bool,
    soft: bool,
    detail: String,
    seconds: f64,
}

#[derive(Default)]
struct Shared {
    baseline_solutions: Vec<(TranscribedProblem, Vec<f64>)>,
    baseline_speed_times: Vec<f64>,
    expert_episodes: Vec<(Scene, EpisodeRecord)>,
    dataset: Vec<OracleSample>,
    model: Option<OracleModel>,
}

fn robot() -> RobotModel {
    RobotModel::default()
}

fn pool(class: TerrainClass, (seed, count): (u64, usize), steps: Option<usize>) -> Vec<Scene> {
    let c = ScenarioConfig {
        generator: class,
        seed,
        terrains: count,
        steps,
        ..ScenarioConfig::default()
    };
    scenes(&c, None).expect("terrain pool")
}

fn wall(mode: PlannerMode, ph: usize) -> RhpConfig {
    RhpConfig::new(mode, ph)
}

fn work(mode: PlannerMode, ph: usize) -> RhpConfig {
    let mut c = RhpConfig::new(mode, ph);
    c.timing = TimingMode::Work {
        seconds_per_unit: DEFAULT_SECONDS_PER_WORK,
    };
    c
}

fn episodes(config: &RhpConfig, scenes: &[Scene], guide: Option<&dyn Guide>) -> Vec<EpisodeRecord> {
    scenes
        .iter()
        .map(|s| run_episode(config, &s.terrain, &s.id, &s.x_init, &s.goal, guide, &InteriorPoint).expect("episode"))
        .collect()
}

fn solve_times(es: &[EpisodeRecord]) -> Vec<f64> {
    es.iter().flat_map(|e| e.cycles.iter().map(|c| c.solve_time)).collect()
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len().max(1) as f64
}

fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}

fn two_step_baseline(terrain: &Terrain) -> TranscribedProblem {
    let r = robot();
    let x0 = rhp_core::rhp::start_state(terrain, &r).unwrap();
    let goal = rhp_core::rhp::goal_state(terrain, &r).unwrap();
    build_baseline(&HorizonSpec::new(2, 8, Foot::Left).unwrap(), terrain, &x0, &goal, &r).unwrap()
}

fn c1_feasibility(shared: &mut Shared) -> (bool, String) {
    let params = TerrainParams::default();
    let mut worst = 0.0f64;
    let mut failures = Vec::new();
    for i in 0..10u64 {
        let class = if i < 5 { TerrainClass::Flat } else { TerrainClass::ModerateSlopes };
        let terrain = generate_terrain(class, Some(2), 500 + i, &params).unwrap();
        let p = two_step_baseline(&terrain);
        let options = SolveOptions {
            feasibility_tolerance: PROJECTION_SOLVE_TOL,
            ..SolveOptions::default()
        };
        let r = solve(&p.nlp, &options).unwrap();
        if r.status != SolveStatus::Converged {
            failures.push(format!("{class}-{}: {:?}", 500 + i, r.status));
            continue;
        }
        let plan = p.extract_plan(&r.solution);
        let res = evaluate_residuals(&plan, &terrain, &robot());
        let t = plan.switch_times();
        let monotone = t[0] > 0.0 && t.windows(2).all(|w| w[0] < w[1]) && *t.last().unwrap() <= p.spec.t_max + 1e-9;
        worst = worst.max(res.max());
        if res.max() > FEASIBILITY_TOL || !monotone {
            failures.push(format!("{class}-{}: {res:?}", 500 + i));
        }
        shared.baseline_solutions.push((p, r.solution));
    }
    (
        failures.is_empty(),
        format!("10 two-step solves, worst residual {worst:.2e} (tol {FEASIBILITY_TOL:.0e}); failures {failures:?}"),
    )
}

fn c2_derivatives(_: &mut Shared) -> (bool, String) {
    let r = robot();
    let terrain = generate_terrain(TerrainClass::ModerateSlopes, Some(3), 7, &TerrainParams::default()).unwrap();
    let mut problems: Vec<(String, TranscribedProblem)> = vec![("baseline".into(), two_step_baseline(&terrain))];
    let feet = default_start_feet(&terrain).unwrap();
    let x0 = rhp_core::rhp::start_state(&terrain, &r).unwrap();
    let goal = rhp_core::rhp::goal_state(&terrain, &r).unwrap();
    for kind in RelaxationKind::ALL {
        let tail = PredictionTail {
            swing_first: Foot::Left,
            surfaces: terrain.step_sequence[..3].to_vec(),
            durations: vec![[0.3, 0.5, 0.3]; 3],
            boundary: x0,
            feet,
            goal,
            knots_per_phase: 8,
        };
        problems.push((kind.name().into(), build_prediction_horizon(kind, &tail, &terrain, &r).unwrap()));
    }
    let surface = terrain.step_sequence[0];
    let objective = LocalObjective {
        x_star: goal,
        alpha: [0.5, 0.5],
        footstep: on_surface_point(terrain.surface(surface).unwrap(), 0.5, 0.5).unwrap(),
        switch_times: [0.3, 0.8, 1.1],
    };
    problems.push((
        "guided".into(),
        build_lg_problem(&objective, 0.15, &x0, feet, Foot::Left, surface, &terrain, &r, 8).unwrap(),
    ));
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst: (f64, String) = (0.0, String::new());
    let mut families = std::collections::BTreeSet::new();
    for (name, p) in &problems {
        let guess = p.default_guess();
        for _ in 0..DERIVATIVE_POINTS {
            let x: Vec<f64> = guess.iter().map(|v| v + rng.random_range(-0.1..0.1)).collect();
            for (family, err) in derivative_check(&p.nlp, &x) {
                families.insert(family);
                if err > worst.0 {
                    worst = (err, format!("{name}/{family}"));
                }
            }
        }
    }
    (
        worst.0 <= DERIVATIVE_TOL,
        format!(
            "{} problems x {DERIVATIVE_POINTS} points, {} families, worst {:.2e} at {} (tol {DERIVATIVE_TOL:.0e})",
            problems.len(),
            families.len(),
            worst.0,
            worst.1
        ),
    )
}

fn c3_projection(shared: &mut Shared) -> (bool, String) {
    let mut worst = 0.0f64;
    let mut count = 0;
    for (p, x) in &shared.baseline_solutions {
        for kind in [RelaxationKind::PontonRectangular, RelaxationKind::PontonPoint] {
            worst = worst.max(projection_violation(p, x, kind).unwrap());
        }
        count += 1;
    }
    (
        count >= 5 && worst <= PROJECTION_TOL,
        format!("{count} converged solutions projected into Rect and Point, worst violation {worst:.2e} (tol {PROJECTION_TOL:.0e})"),
    )
}

fn c4_convexity(_: &mut Shared) -> (bool, String) {
    let r = robot();
    let terrain = generate_terrain(TerrainClass::ModerateSlopes, Some(4), 9, &TerrainParams::default()).unwrap();
    let tail = PredictionTail {
        swing_first: Foot::Left,
        surfaces: terrain.step_sequence.clone(),
        durations: vec![[0.3, 0.5, 0.3]; 4],
        boundary: rhp_core::rhp::start_state(&terrain, &r).unwrap(),
        feet: default_start_feet(&terrain).unwrap(),
        goal: rhp_core::rhp::goal_state(&terrain, &r).unwrap(),
        knots_per_phase: 8,
    };
    let mut relaxed = Vec::new();
    for kind in RelaxationKind::ALL {
        let p = build_prediction_horizon(kind, &tail, &terrain, &r).unwrap();
        relaxed.push((kind.name(), p.nlp.convexity_counts()));
    }
    let relaxed_ok = relaxed.iter().all(|(_, c)| c[2] == 0);
    let base = two_step_baseline(&terrain);
    let intervals = base.layout.knots.len() - 1;
    let mut per_knot = vec![0usize; intervals];
    for info in base.nlp.eq_info.iter().chain(&base.nlp.ineq_info) {
        if let (Convexity::NonConvex, Some(k)) = (info.convexity, info.knot) {
            if k < intervals {
                per_knot[k] += 1;
            }
        }
    }
    let min = per_knot.iter().copied().min().unwrap_or(0);
    (
        relaxed_ok && min >= 1,
        format!(
            "relaxed [affine, convex, non-convex] counts {relaxed:?}; baseline non-convex rows per knot min {min}, max {}",
            per_knot.iter().max().unwrap_or(&0)
        ),
    )
}

fn c5_speed(shared: &mut Shared) -> (bool, String) {
    let scenes = pool(TerrainClass::ModerateSlopes, SPEED_POOL, None);
    let mut stats = Vec::new();
    for mode in [
        PlannerMode::BaselineFullModel,
        PlannerMode::MultiFidelity(RelaxationKind::PontonRectangular),
        PlannerMode::MultiFidelity(RelaxationKind::PontonPoint),
    ] {
        let es = episodes(&wall(mode, 1), &scenes, None);
        let times = solve_times(&es);
        let work: Vec<f64> = es.iter().flat_map(|e| e.cycles.iter().map(|c| c.work as f64)).collect();
        if mode == PlannerMode::BaselineFullModel {
            shared.baseline_speed_times = times.clone();
        }
        stats.push((mode.label(), times.len(), mean(&times), mean(&work)));
    }
    let (base, rect, point) = (&stats[0], &stats[1], &stats[2]);
    let ratio = base.2 / point.2;
    let cycles = stats.iter().map(|s| s.1).min().unwrap();
    let pass = cycles >= 10 && point.2 <= rect.2 && rect.2 < base.2 && ratio >= SPEEDUP_MIN_RATIO;
    (
        pass,
        format!(
            "{cycles}+ cycles; mean wall solve time Baseline {:.4}s, Rect {:.4}s, Point {:.4}s; Baseline/Point {ratio:.2} (min {SPEEDUP_MIN_RATIO}); mean work {:.2e}/{:.2e}/{:.2e}",
            base.2, rect.2, point.2, base.3, rect.3, point.3
        ),
    )
}

fn train_oracle(shared: &mut Shared) {
    if shared.model.is_some() {
        return;
    }
    let scenes = pool(TerrainClass::ModerateSlopes, TRAINING_POOL, None);
    let expert = work(PlannerMode::BaselineFullModel, 3);
    for s in scenes {
        let e = run_episode(&expert, &s.terrain, &s.id, &s.x_init, &s.goal, None, &InteriorPoint).unwrap();
        let (samples, _) = extract_samples(&e, &s.terrain, &s.goal).unwrap();
        shared.dataset.extend(samples);
        shared.expert_episodes.push((s, e));
    }
    let (model, _) = train_mlp(&shared.dataset, &TrainOptions::default()).unwrap();
    shared.model = Some(model);
}

fn c6_guided_speed(shared: &mut Shared) -> (bool, String) {
    if shared.baseline_speed_times.is_empty() {
        let scenes = pool(TerrainClass::ModerateSlopes, SPEED_POOL, None);
        shared.baseline_speed_times = solve_times(&episodes(&wall(PlannerMode::BaselineFullModel, 1), &scenes, None));
    }
    train_oracle(shared);
    let model = shared.model.as_ref().unwrap();
    let scenes = pool(TerrainClass::ModerateSlopes, SPEED_POOL, None);
    let es = episodes(&wall(PlannerMode::LocallyGuided { epsilon: 0.15 }, 0), &scenes, Some(model));
    let lg = median(&solve_times(&es));
    let base = median(&shared.baseline_speed_times);
    let success = es.iter().filter(|e| rhp_core::oracle::episode_succeeded(e)).count();
    let online = es.iter().flat_map(|e| &e.cycles).filter(|c| c.outcome == rhp_core::rhp::CycleOutcome::SuccessOnline).count();
    let cycles: usize = es.iter().map(|e| e.cycles.len()).sum();
    (
        lg <= LG_MEDIAN_MAX_FRACTION * base,
        format!(
            "median solve time LG {lg:.4}s vs Baseline {base:.4}s (ratio {:.2}, max {LG_MEDIAN_MAX_FRACTION}); LG episodes {success}/{} succeeded, {online}/{cycles} cycles online; oracle trained on {} samples",
            lg / base,
            es.len(),
            shared.dataset.len()
        ),
    )
}

fn c7_angular(_: &mut Shared) -> (bool, String) {
    let params = TerrainParams::default();
    let point = work(PlannerMode::MultiFidelity(RelaxationKind::PontonPoint), 2);
    let com = work(PlannerMode::MultiFidelity(RelaxationKind::ComOnly), 2);
    let r = robot();
    let mut tried = 0;
    for seed in LARGE_SLOPE_SEEDS {
        let terrain = generate_terrain(TerrainClass::LargeSlope, None, seed, &params).unwrap();
        let s = Scene::new(format!("large-slope-{seed}"), terrain, &r).unwrap();
        tried += 1;
        let ep = run_episode(&point, &s.terrain, &s.id, &s.x_init, &s.goal, None, &InteriorPoint).unwrap();
        if !rhp_core::oracle::episode_succeeded(&ep) {
            continue;
        }
        let ec = run_episode(&com, &s.terrain, &s.id, &s.x_init, &s.goal, None, &InteriorPoint).unwrap();
        if ec.outcome == rhp_core::rhp::EpisodeOutcome::FailToConverge {
            return (
                true,
                format!(
                    "{}: PontonPoint completes ({} cycles), ComOnly fails to converge at cycle {} (2-step PH)",
                    s.id,
                    ep.cycles.len(),
                    ec.cycles.len()
                ),
            );
        }
    }
    (false, format!("not reproduced on {tried} large-slope terrains (logged, not a hard failure)"))
}

fn c8_incremental(shared: &mut Shared) -> (bool, String) {
    train_oracle(shared);
    // Seed the aggregation with a deliberately small expert set.
    let initial: Vec<OracleSample> = shared.expert_episodes[..AUGMENT_SEED_POOL]
        .iter()
        .flat_map(|(s, e)| extract_samples(e, &s.terrain, &s.goal).unwrap().0)
        .collect();
    let scenes = pool(TerrainClass::ModerateSlopes, AUGMENT_POOL, None);
    let options = IncrementalOptions {
        iterations: 3,
        min_iterations: 3,
        learner: work(PlannerMode::LocallyGuided { epsilon: 0.15 }, 0),
        expert: work(PlannerMode::BaselineFullModel, 3),
        train: TrainOptions {
            batch_size: 8,
            ..TrainOptions::default()
        },
        ..IncrementalOptions::default()
    };
    let run = incremental_train(&initial, &scenes, &options, &InteriorPoint).unwrap();
    let rates = run.success_rates();
    let sizes: Vec<usize> = run.iterations.iter().map(|i| i.dataset_size).collect();
    let first = rates[0];
    let last = *rates.last().unwrap();
    let improved = rates.windows(2).any(|w| w[1] > w[0]);
    let pass = if first < 100.0 {
        run.iterations.len() >= 3 && last >= first && improved
    } else {
        last >= first
    };
    (
        pass,
        format!(
            "{} iterations, success rates {rates:?} %, dataset sizes {sizes:?}, {} diagnostics",
            run.iterations.len(),
            run.diagnostics.len()
        ),
    )
}

fn moved_scene(terrain: &Terrain, theta: f64, t: Vec3) -> (Terrain, Matrix3<f64>) {
    let r = *Rotation3::from_axis_angle(&Vec3::z_axis(), theta).matrix();
    let surfaces = terrain.surfaces.iter().map(|s| s.transformed(&r, &t)).collect();
    (Terrain::new(surfaces, terrain.start_surfaces, terrain.step_sequence.clone()).unwrap(), r)
}

fn c9_oracle_identities(shared: &mut Shared) -> (bool, String) {
    train_oracle(shared);
    let knn = OracleModel::fit_knn(&shared.dataset, 1).unwrap();
    let exact = shared.dataset.iter().all(|s| knn.predict(&s.input).unwrap() == s.target);
    let mut encodings = 0;
    let mut invariant = true;
    let mut alpha_worst = 0.0f64;
    for (s, e) in &shared.expert_episodes {
        for c in e.cycles.iter().filter(|c| c.converged()) {
            let step = c.plan.as_ref().unwrap().footsteps[0];
            let (samples, _) = extract_samples(
                &EpisodeRecord {
                    cycles: vec![c.clone()],
                    ..e.clone()
                },
                &s.terrain,
                &s.goal,
            )
            .unwrap();
            for sample in samples {
                let surf = s.terrain.surface(step.surface_index).unwrap();
                let p = on_surface_point(surf, sample.target.alpha[0], sample.target.alpha[1]).unwrap();
                alpha_worst = alpha_worst.max((p - step.position).norm());
            }
            for (theta, t) in [(0.9, Vec3::new(4.0, -3.0, 0.7)), (-2.4, Vec3::new(-20.0, 8.0, -2.0))] {
                let (other, r) = moved_scene(&s.terrain, theta, t);
                let map = |x: &CentroidalState| CentroidalState::new(r * x.com_position + t, r * x.com_velocity, r * x.angular_momentum);
                let mut feet = c.input.feet;
                for f in &mut feet {
                    f.position = r * f.position + t;
                    f.yaw += theta;
                }
                let moved = CycleInput {
                    x_start: map(&c.input.x_start),
                    feet,
                    ..c.input
                };
                let goal = map(&s.goal);
                let a = OracleInput::from_context(&CycleContext { terrain: &s.terrain, input: &c.input, goal: &s.goal }).unwrap().encode();
                let b = OracleInput::from_context(&CycleContext { terrain: &other, input: &moved, goal: &goal }).unwrap().encode();
                invariant &= a.iter().zip(&b).all(|(x, y)| x.to_bits() == y.to_bits());
                // The stance frame moves with the scene.
                let fa = stance_frame(&c.input.feet, c.input.stance(), &s.terrain).unwrap();
                let fb = stance_frame(&feet, c.input.stance(), &other).unwrap();
                invariant &= (r * fa.origin + t - fb.origin).norm() <= 1e-12;
                encodings += 1;
            }
        }
    }
    (
        exact && invariant && alpha_worst <= ALPHA_ROUND_TRIP_TOL,
        format!(
            "k=1 exact on {} samples: {exact}; {encodings} moved encodings bitwise equal: {invariant}; alpha round trip {alpha_worst:.2e} m (tol {ALPHA_ROUND_TRIP_TOL:.0e})",
            shared.dataset.len()
        ),
    )
}

fn c10_bookkeeping(_: &mut Shared) -> (bool, String) {
    let config = ScenarioConfig {
        name: "bookkeeping".into(),
        generator: TerrainClass::ModerateSlopes,
        seed: BOOKKEEPING_POOL.0,
        terrains: BOOKKEEPING_POOL.1,
        mode: ModeId::MfPoint,
        timing: TimingId::Work,
        ..ScenarioConfig::default()
    };
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let ra = run_suite(std::slice::from_ref(&config), None, Some(a.path()), &InteriorPoint).unwrap();
    run_suite(std::slice::from_ref(&config), None, Some(b.path()), &InteriorPoint).unwrap();
    let mut problems = Vec::new();
    for f in ["metrics.csv", "episodes.csv"] {
        if std::fs::read(a.path().join(f)).unwrap() != std::fs::read(b.path().join(f)).unwrap() {
            problems.push(format!("{f} differs between runs"));
        }
    }
    let scenes = scenes(&config, None).unwrap();
    let rhp = config.rhp_config();
    let mut cycles = 0;
    for (ep, scene) in ra.episodes.iter().zip(&scenes) {
        let e = &ep.record;
        if e.outcome != classify_episode(&e.cycles, e.reached_goal) {
            problems.push(format!("{}: outcome label", e.terrain_id));
        }
        if e.cycles.first().map(|c| c.budget.is_some()).unwrap_or(false) {
            problems.push(format!("{}: first cycle has a budget", e.terrain_id));
        }
        for w in e.cycles.windows(2) {
            if w[1].budget != Some(w[0].eh_duration) {
                problems.push(format!("{}: budget law at cycle {}", e.terrain_id, w[1].input.index));
            }
            let next = handoff(&w[0]).unwrap();
            if next != w[1].input || Some(w[1].input.x_start) != w[0].eh_terminal_state() {
                problems.push(format!("{}: handoff at cycle {}", e.terrain_id, w[1].input.index));
            }
        }
        // Replay every cycle from its recorded input.
        for (k, c) in e.cycles.iter().enumerate() {
            let prev = k.checked_sub(1).map(|j| &e.cycles[j]);
            let again = run_cycle(&rhp, &scene.terrain, &scene.goal, &c.input, prev, None, &InteriorPoint).unwrap();
            if again.outcome != c.outcome || again.plan != c.plan || again.solve_time != c.solve_time {
                problems.push(format!("{}: replay of cycle {k}", e.terrain_id));
            }
            cycles += 1;
        }
    }
    for row in &ra.table.rows {
        let (ep, cy) = (row.episodic.iter().sum::<f64>(), row.cycle_wise.iter().sum::<f64>());
        if (ep - 100.0).abs() > PARTITION_TOL || (cy - 100.0).abs() > PARTITION_TOL {
            problems.push(format!("partition sums {ep} / {cy}"));
        }
    }
    (
        problems.is_empty() && ra.episodes.len() == BOOKKEEPING_POOL.1,
        format!("{} episodes, {cycles} cycles replayed; problems {problems:?}", ra.episodes.len()),
    )
}

type Criterion = fn(&mut Shared) -> (bool, String);

fn main() {
    // `cargo test` passes harness flags; list mode must not run anything.
    if std::env::args().any(|a| a == "--list") {
        return;
    }
    let only: Option<Vec<usize>> = std::env::var("ACCEPTANCE_ONLY")
        .ok()
        .map(|v| v.split(',').filter_map(|s| s.trim().parse().ok()).collect());
    let criteria: [(usize, &'static str, bool, Criterion); 10] = [
        (1, "feasibility", false, c1_feasibility),
        (2, "derivatives", false, c2_derivatives),
        (3, "relaxation soundness", false, c3_projection),
        (4, "convexity certificate", false, c4_convexity),
        (5, "speed ordering", false, c5_speed),
        (6, "short-horizon speedup", false, c6_guided_speed),
        (7, "angular-dynamics necessity", true, c7_angular),
        (8, "incremental training trend", false, c8_incremental),
        (9, "oracle identities", false, c9_oracle_identities),
        (10, "bookkeeping", false, c10_bookkeeping),
    ];
    let mut shared = Shared::default();
    let mut lines = Vec::new();
    for (id, name, soft, f) in criteria {
        if only.as_ref().is_some_and(|o| !o.contains(&id)) {
            continue;
        }
        let start = Instant::now();
        let (pass, detail) = match catch_unwind(AssertUnwindSafe(|| f(&mut shared))) {
            Ok(r) => r,
            Err(e) => (
                false,
                format!(
                    "panicked: {}",
                    e.downcast_ref::<String>().cloned().or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_default()
                ),
            ),
        };
        let line = Line {
            id,
            name,
            pass,
            soft,
            detail,
            seconds: start.elapsed().as_secs_f64(),
        };
        let tag = match (line.pass, line.soft) {
            (true, _) => "PASS",
            (false, true) => "SOFT-MISS",
            (false, false) => "FAIL",
        };
        println!("[{tag}] criterion {:>2} {} ({:.1}s): {}", line.id, line.name, line.seconds, line.detail);
        lines.push(line);
    }
    let failed: Vec<usize> = lines.iter().filter(|l| !l.pass && !l.soft).map(|l| l.id).collect();
    println!(
        "acceptance: {} run, {} failed {:?}",
        lines.len(),
        failed.len(),
        failed
    );
    if !failed.is_empty() {
        std::process::exit(1);
    }
}
