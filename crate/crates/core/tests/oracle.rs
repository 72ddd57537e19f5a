mod common;

use std::collections::BTreeSet;

use nalgebra::{Matrix3, Rotation3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rhp_core::model::{on_surface_point, CentroidalState, Foot, Footstep, RobotModel, Terrain, Vec3};
use rhp_core::oracle::*;
use rhp_core::rhp::*;
use rhp_core::solver::SolveStatus;
use rhp_core::transcription::{PhaseKind, StepTiming};
use rhp_core::PlanError;

fn expert_episode(terrain: &Terrain) -> (EpisodeRecord, CentroidalState) {
    let robot = RobotModel::default();
    let x0 = start_state(terrain, &robot).unwrap();
    let goal = goal_state(terrain, &robot).unwrap();
    let config = RhpConfig::new(PlannerMode::BaselineFullModel, 2);
    (run_episode(&config, terrain, "t", &x0, &goal, None, &InteriorPoint).unwrap(), goal)
}

fn wavy(steps: usize) -> Terrain {
    common::lane_terrain(steps, |k| if k == 0 { 0.0 } else { [7.0, -5.0, 9.0][k % 3] })
}

fn random_samples(n: usize, seed: u64) -> Vec<OracleSample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let v = |rng: &mut ChaCha8Rng| Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
    (0..n)
        .map(|_| {
            let x0 = CentroidalState::new(v(&mut rng), v(&mut rng), v(&mut rng));
            let input = OracleInput {
                swing: if rng.random_bool(0.5) { Foot::Left } else { Foot::Right },
                x0,
                p0: v(&mut rng),
                preview: (0..2 + PREVIEW_STEPS).map(|_| [v(&mut rng), v(&mut rng), v(&mut rng), v(&mut rng)]).collect(),
                goal: v(&mut rng),
            };
            let d: [f64; 3] = [rng.random_range(0.1..0.5), rng.random_range(0.2..0.6), rng.random_range(0.1..0.5)];
            let target = OracleTarget {
                x_star: CentroidalState::new(v(&mut rng), v(&mut rng), v(&mut rng)),
                alpha: [rng.random_range(0.0..1.0), rng.random_range(0.0..1.0)],
                timings: [d[0], d[0] + d[1], d[0] + d[1] + d[2]],
            };
            OracleSample { input, target }
        })
        .collect()
}

/// Rigid motion about the z axis: yaw `theta`, then translation `t`.
fn moved(terrain: &Terrain, theta: f64, t: Vec3) -> (Terrain, Matrix3<f64>) {
    let r = *Rotation3::from_axis_angle(&Vec3::z_axis(), theta).matrix();
    let surfaces = terrain.surfaces.iter().map(|s| s.transformed(&r, &t)).collect();
    (
        Terrain::new(surfaces, terrain.start_surfaces, terrain.step_sequence.clone()).unwrap(),
        r,
    )
}

#[test]
fn encodings_have_fixed_width() {
    let s = &random_samples(1, 0)[0];
    assert_eq!(s.input.encode().len(), INPUT_DIM);
    assert_eq!(s.target.encode().len(), OUTPUT_DIM);
    let back = OracleTarget::decode(&s.target.encode()).unwrap();
    for i in 0..3 {
        assert!((back.timings[i] - s.target.timings[i]).abs() < 1e-12);
    }
    assert!(OracleTarget::decode(&[0.0; 3]).is_err());
}

#[test]
fn decode_clamps_to_valid_objectives() {
    let mut raw = vec![0.0; OUTPUT_DIM];
    raw[9] = -0.4;
    raw[10] = 1.7;
    raw[11] = -1.0;
    raw[12] = 0.0;
    raw[13] = f64::NAN;
    let t = OracleTarget::decode(&raw).unwrap();
    assert_eq!(t.alpha, [0.0, 1.0]);
    assert!(t.timings[0] > 0.0 && t.timings[0] < t.timings[1] && t.timings[1] < t.timings[2]);
}

#[test]
fn extracted_samples_match_converged_cycles() {
    let terrain = wavy(4);
    let (e, goal) = expert_episode(&terrain);
    let converged = e.cycles.iter().filter(|c| c.converged()).count();
    let (samples, rejected) = extract_samples(&e, &terrain, &goal).unwrap();
    assert_eq!(samples.len() + rejected.len(), e.cycles.len());
    assert_eq!(samples.len(), converged);
    for (s, c) in samples.iter().zip(e.cycles.iter().filter(|c| c.converged())) {
        let plan = c.plan.as_ref().unwrap();
        let step = plan.footsteps[0];
        let p = on_surface_point(terrain.surface(step.surface_index).unwrap(), s.target.alpha[0], s.target.alpha[1]).unwrap();
        assert!((p - step.position).norm() <= 1e-7);
        let t = plan.switch_times();
        assert_eq!(s.target.timings, [t[0], t[1], t[2]]);
        assert_eq!(s.input.swing, c.input.swing);
        assert_eq!(s.input.preview.len(), 2 + PREVIEW_STEPS);
    }
}

#[test]
fn stance_at_origin_leaves_positions_unchanged() {
    // Shift a flat terrain so that the first stance foot sits at the origin.
    let base = common::flat_terrain(2);
    let feet = rhp_core::transcription::default_start_feet(&base).unwrap();
    let (terrain, _) = moved(&base, 0.0, -feet[Foot::Right.index()].position);
    let robot = RobotModel::default();
    let x0 = start_state(&terrain, &robot).unwrap();
    let goal = goal_state(&terrain, &robot).unwrap();
    let config = RhpConfig::new(PlannerMode::BaselineFullModel, 1);
    let input = initial_input(&terrain, &x0, &config).unwrap();
    assert!(input.feet[Foot::Right.index()].position.norm() <= 1e-12);
    let ctx = CycleContext { terrain: &terrain, input: &input, goal: &goal };
    let encoded = OracleInput::from_context(&ctx).unwrap();
    assert!((encoded.p0 - input.feet[Foot::Left.index()].position).norm() <= 1e-9);
    assert!((encoded.x0.com_position - x0.com_position).norm() <= 1e-9);
}

#[test]
fn inputs_are_invariant_under_rigid_yaw_motions() {
    let terrain = wavy(4);
    let (e, goal) = expert_episode(&terrain);
    for (theta, t) in [(0.7, Vec3::new(3.0, -2.0, 0.5)), (-2.9, Vec3::new(-10.0, 4.0, -1.0)), (std::f64::consts::FRAC_PI_2, Vec3::zeros())] {
        let (other, r) = moved(&terrain, theta, t);
        let goal2 = CentroidalState::new(r * goal.com_position + t, r * goal.com_velocity, r * goal.angular_momentum);
        for c in &e.cycles {
            let input = c.input;
            let mut feet = input.feet;
            for f in &mut feet {
                f.position = r * f.position + t;
                f.yaw += theta;
            }
            let x = input.x_start;
            let moved_input = CycleInput {
                x_start: CentroidalState::new(r * x.com_position + t, r * x.com_velocity, r * x.angular_momentum),
                feet,
                ..input
            };
            let a = OracleInput::from_context(&CycleContext { terrain: &terrain, input: &input, goal: &goal }).unwrap();
            let b = OracleInput::from_context(&CycleContext { terrain: &other, input: &moved_input, goal: &goal2 }).unwrap();
            let (ea, eb) = (a.encode(), b.encode());
            assert!(ea.iter().zip(&eb).all(|(x, y)| x.to_bits() == y.to_bits()), "theta {theta}");
            // Local objectives map back to the moved world.
            let target = OracleTarget::decode(&OracleTarget::encode(&random_samples(1, 3)[0].target)).unwrap();
            let fa = stance_frame(&input.feet, input.stance(), &terrain).unwrap();
            let fb = stance_frame(&feet, input.stance(), &other).unwrap();
            let s = terrain.step_sequence[input.cursor];
            let la = LocalObjective::from_target(&target, &fa, &terrain, s).unwrap();
            let lb = LocalObjective::from_target(&target, &fb, &other, s).unwrap();
            assert!((r * la.x_star.com_position + t - lb.x_star.com_position).norm() <= 1e-12);
            assert!((r * la.footstep + t - lb.footstep).norm() <= 1e-12);
        }
    }
}

#[test]
fn nearest_neighbour_returns_stored_targets() {
    let samples = random_samples(40, 1);
    let model = OracleModel::fit_knn(&samples, 1).unwrap();
    for s in &samples {
        assert_eq!(model.predict(&s.input).unwrap(), s.target);
    }
    assert!(OracleModel::fit_knn(&samples, 0).is_err());
    assert!(OracleModel::fit_knn(&[], 1).is_err());
}

#[test]
fn zero_network_predicts_output_mean() {
    let samples = random_samples(20, 2);
    let inputs: Vec<Vec<f64>> = samples.iter().map(|s| s.input.encode()).collect();
    let outputs: Vec<Vec<f64>> = samples.iter().map(|s| s.target.encode()).collect();
    let out_norm = Normalization::fit(&outputs);
    let model = OracleModel::zero_mlp(vec![16, 16], Normalization::fit(&inputs), out_norm.clone());
    for x in &inputs {
        assert_eq!(model.predict_encoded(x).unwrap(), out_norm.mean);
    }
    assert!(model.predict_encoded(&[0.0; 3]).is_err());
}

#[test]
fn network_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let sizes = vec![3, 8, 8, 2];
    let params: Vec<f64> = (0..param_count(&sizes)).map(|_| rng.random_range(-0.8..0.8)).collect();
    let xs: Vec<Vec<f64>> = (0..5).map(|_| (0..3).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
    let ys: Vec<Vec<f64>> = (0..5).map(|_| (0..2).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
    let xr: Vec<&[f64]> = xs.iter().map(|v| v.as_slice()).collect();
    let yr: Vec<&[f64]> = ys.iter().map(|v| v.as_slice()).collect();
    let (_, grad) = mlp_loss_and_gradient(&sizes, &params, &xr, &yr);
    let h = 1e-6;
    for i in 0..params.len() {
        let mut p = params.clone();
        p[i] += h;
        let up = mlp_loss_and_gradient(&sizes, &p, &xr, &yr).0;
        p[i] -= 2.0 * h;
        let down = mlp_loss_and_gradient(&sizes, &p, &xr, &yr).0;
        let fd = (up - down) / (2.0 * h);
        let err = (grad[i] - fd).abs() / grad[i].abs().max(fd.abs()).max(1e-3);
        assert!(err <= 1e-4, "param {i}: {} vs {fd}", grad[i]);
    }
}

#[test]
fn network_memorizes_one_sample() {
    let samples = random_samples(1, 5);
    let options = TrainOptions {
        hidden: vec![16, 16],
        epochs: 500,
        batch_size: 1,
        ..TrainOptions::default()
    };
    let (model, report) = train_mlp(&samples, &options).unwrap();
    assert!(report.final_train_loss <= 1e-6, "{report:?}");
    let back = model.predict(&samples[0].input).unwrap();
    assert!((back.x_star.com_position - samples[0].target.x_star.com_position).norm() < 1e-2);
}

#[test]
fn training_reduces_loss_and_is_reproducible() {
    let samples = random_samples(60, 6);
    let options = TrainOptions {
        hidden: vec![32, 32],
        epochs: 40,
        batch_size: 16,
        ..TrainOptions::default()
    };
    let (a, ra) = train_mlp(&samples, &options).unwrap();
    let (b, rb) = train_mlp(&samples, &options).unwrap();
    assert!(ra.final_train_loss <= ra.initial_train_loss);
    assert_eq!(a, b);
    assert_eq!(ra, rb);
    let few = TrainOptions { batch_size: 100, ..options };
    assert!(matches!(train_mlp(&samples, &few), Err(PlanError::Training(_))));
}

#[test]
fn models_and_datasets_round_trip_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let samples = random_samples(12, 7);
    let text = dataset_to_string(&samples).unwrap();
    assert_eq!(dataset_from_str(&text).unwrap(), samples);
    let path = dir.path().join("data.jsonl");
    save_dataset(&path, &samples).unwrap();
    assert_eq!(load_dataset(&path).unwrap(), samples);
    assert_eq!(std::fs::read_to_string(&path).unwrap(), text);

    let (model, _) = train_mlp(&samples, &TrainOptions { hidden: vec![8], epochs: 3, batch_size: 4, ..TrainOptions::default() }).unwrap();
    let mpath = dir.path().join("model.json");
    model.save(&mpath).unwrap();
    let loaded = OracleModel::load(&mpath).unwrap();
    assert_eq!(loaded, model);
    for s in &samples {
        let (x, y) = (model.predict_encoded(&s.input.encode()).unwrap(), loaded.predict_encoded(&s.input.encode()).unwrap());
        assert!(x.iter().zip(&y).all(|(a, b)| a.to_bits() == b.to_bits()));
    }
    let bumped = std::fs::read_to_string(&mpath).unwrap().replacen("\"schema_version\":1", "\"schema_version\":99", 1);
    std::fs::write(&mpath, bumped).unwrap();
    assert!(OracleModel::load(&mpath).is_err());
}

fn lg_setup(epsilon: f64, switch_times: [f64; 3]) -> (rhp_core::transcription::TranscribedProblem, usize) {
    let robot = RobotModel::default();
    let terrain = common::flat_terrain(2);
    let x0 = start_state(&terrain, &robot).unwrap();
    let config = RhpConfig::new(PlannerMode::BaselineFullModel, 1);
    let input = initial_input(&terrain, &x0, &config).unwrap();
    let surface = terrain.step_sequence[0];
    let target = on_surface_point(terrain.surface(surface).unwrap(), 0.5, 0.5).unwrap();
    let mut x_star = x0;
    x_star.com_position.x += 0.2;
    let objective = LocalObjective {
        x_star,
        alpha: [0.5, 0.5],
        footstep: target,
        switch_times,
    };
    let p = build_lg_problem(&objective, epsilon, &x0, input.feet, input.swing, surface, &terrain, &robot, 8).unwrap();
    let goal = goal_state(&terrain, &robot).unwrap();
    let baseline = run_cycle(&config, &terrain, &goal, &input, None, None, &InteriorPoint).unwrap();
    (p, baseline.num_vars)
}

#[test]
fn guided_problem_windows_follow_epsilon() {
    for (eps, lo, hi) in [(0.15, 0.85, 1.15), (0.6, 0.4, 1.6)] {
        let (p, _) = lg_setup(eps, [0.4, 1.0, 1.3]);
        match p.spec.steps[0].timing {
            StepTiming::Window(w) => {
                assert!((w[1].0 - lo).abs() < 1e-12 && (w[1].1 - hi).abs() < 1e-12, "{w:?}");
            }
            other => panic!("unexpected timing {other:?}"),
        }
    }
    let (p, _) = lg_setup(0.0, [0.3, 0.7, 1.0]);
    let r = rhp_core::solver::solve(&p.nlp, &Default::default()).unwrap();
    assert_eq!(r.status, SolveStatus::Converged);
    let t = p.switch_times(&r.solution);
    for (a, b) in t.iter().zip([0.3, 0.7, 1.0]) {
        assert!((a - b).abs() <= 1e-6, "{t:?}");
    }
    assert!(matches!(
        build_lg_problem(
            &LocalObjective { x_star: CentroidalState::at_rest(Vec3::zeros()), alpha: [0.5; 2], footstep: Vec3::zeros(), switch_times: [0.5, 0.4, 1.0] },
            0.1,
            &CentroidalState::at_rest(Vec3::zeros()),
            [Footstep::new(Vec3::zeros(), 0), Footstep::new(Vec3::zeros(), 1)],
            Foot::Left,
            2,
            &common::flat_terrain(2),
            &RobotModel::default(),
            8
        ),
        Err(PlanError::Range(_))
    ));
}

#[test]
fn guided_problem_is_one_step_and_smaller_than_baseline() {
    let (p, baseline_vars) = lg_setup(0.15, [0.3, 0.7, 1.0]);
    assert_eq!(p.layout.phases.len(), 3);
    let kinds: Vec<PhaseKind> = p.layout.phases.iter().map(|ph| ph.kind).collect();
    assert_eq!(kinds, PhaseKind::ORDER.to_vec());
    assert!(p.nlp.n < baseline_vars);
}

#[test]
fn incremental_training_aggregates_and_stops() {
    let robot = RobotModel::default();
    let scenes: Vec<Scene> = (0..2).map(|i| Scene::new(format!("flat{i}"), common::flat_terrain(3 + i), &robot).unwrap()).collect();
    let expert = RhpConfig::new(PlannerMode::BaselineFullModel, 2);
    let (initial, _) = expert_dataset(&scenes, &expert, &InteriorPoint).unwrap();
    assert_eq!(initial.len(), 7);
    let options = |epochs| IncrementalOptions {
        iterations: 3,
        min_iterations: 3,
        train: TrainOptions { hidden: vec![32, 32], epochs, batch_size: 4, ..TrainOptions::default() },
        learner: RhpConfig::new(PlannerMode::LocallyGuided { epsilon: 0.15 }, 0),
        expert: expert.clone(),
        max_rewind: 2,
        rejoin_distance: 0.5,
        max_recovery_cycles: 2,
    };
    // An untrained oracle fails; expert recoveries are aggregated.
    let run = incremental_train(&initial, &scenes, &options(0), &InteriorPoint).unwrap();
    let first = &run.iterations[0];
    assert!(first.success_rate < 100.0);
    assert!(first.added >= 1 && first.added <= first.failed_terrains.len() * (3 + 2), "{first:?}");
    let mut size = initial.len();
    for it in &run.iterations {
        assert_eq!(it.dataset_size, size);
        size += it.added;
    }
    let last_added = run.iterations.last().unwrap().added;
    assert_eq!(run.dataset.len(), size - last_added);
    let ids: BTreeSet<&String> = run.iterations.iter().flat_map(|i| &i.failed_terrains).collect();
    assert!(ids.iter().all(|id| id.starts_with("flat")));
}
