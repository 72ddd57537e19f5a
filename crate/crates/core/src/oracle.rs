//! Learned local objectives: sample encoding in the stance-foot frame, MLP and
//! k-NN regressors, dataset/model files, the locally guided problem and
//! incremental dataset aggregation.

use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{PlanError, Result};
use crate::model::{
    contact_foot_frame, on_surface_point, CentroidalState, Foot, FootFrame, Footstep, RobotModel, Terrain, Vec3,
};
use crate::rhp::{
    self, handoff, run_cycle, run_episode, CycleContext, CycleInput, CycleRecord, CycleSolver, EpisodeRecord,
    Guide, PlannerMode, RhpConfig,
};
use crate::transcription::{
    build, CostWeights, PhaseModel, ProblemSpec, StepSpec, StepTiming, TerminalCost, TranscribedProblem,
    DEFAULT_PHASE_DURATION, MIN_PHASE_DURATION,
};

pub const SCHEMA_VERSION: u32 = 1;
/// Upcoming step surfaces in the preview, after the two surfaces under the feet.
pub const PREVIEW_STEPS: usize = 3;
pub const INPUT_DIM: usize = 1 + 9 + 3 + (2 + PREVIEW_STEPS) * 12 + 3;
pub const OUTPUT_DIM: usize = 9 + 2 + 3;
/// Encoded quantities are rounded to this grid so that rigid motions of the
/// scene leave them bitwise unchanged.
pub const QUANTUM: f64 = 1e-9;
/// Largest distance between a footstep and its on-surface reconstruction.
pub const SURFACE_TOLERANCE: f64 = 1e-6;

fn quantize(v: f64) -> f64 {
    let q = (v / QUANTUM).round() * QUANTUM;
    if q == 0.0 {
        0.0
    } else {
        q
    }
}

fn quantize3(v: Vec3) -> Vec3 {
    v.map(quantize)
}

/// Contact-foot frame of the stance foot.
pub fn stance_frame(feet: &[Footstep; 2], stance: Foot, terrain: &Terrain) -> Result<FootFrame> {
    let foot = &feet[stance.index()];
    Ok(contact_foot_frame(foot, terrain.surface(foot.surface_index)?))
}

fn state_to_local(frame: &FootFrame, x: &CentroidalState) -> CentroidalState {
    CentroidalState::new(
        quantize3(frame.point_to_local(&x.com_position)),
        quantize3(frame.vector_to_local(&x.com_velocity)),
        quantize3(frame.vector_to_local(&x.angular_momentum)),
    )
}

fn state_to_world(frame: &FootFrame, x: &CentroidalState) -> CentroidalState {
    CentroidalState::new(
        frame.point_to_world(&x.com_position),
        frame.vector_to_world(&x.com_velocity),
        frame.vector_to_world(&x.angular_momentum),
    )
}

/// Oracle input, expressed in the stance-foot frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleInput {
    pub swing: Foot,
    pub x0: CentroidalState,
    /// Current swing-foot position.
    pub p0: Vec3,
    /// Stance surface, swing-foot surface, then the next step surfaces.
    pub preview: Vec<[Vec3; 4]>,
    pub goal: Vec3,
}

impl OracleInput {
    pub fn from_context(ctx: &CycleContext) -> Result<Self> {
        let input = ctx.input;
        let terrain = ctx.terrain;
        let frame = stance_frame(&input.feet, input.stance(), terrain)?;
        let seq = &terrain.step_sequence;
        if seq.is_empty() {
            return Err(PlanError::Structure("terrain has no steps".into()));
        }
        let mut surfaces = vec![
            input.feet[input.stance().index()].surface_index,
            input.feet[input.swing.index()].surface_index,
        ];
        for i in 0..PREVIEW_STEPS {
            // Past the end of the sequence the final surface is repeated.
            surfaces.push(seq[(input.cursor + i).min(seq.len() - 1)]);
        }
        let mut preview = Vec::with_capacity(surfaces.len());
        for s in surfaces {
            let v = terrain.surface(s)?.vertices();
            preview.push(v.map(|p| quantize3(frame.point_to_local(&p))));
        }
        Ok(Self {
            swing: input.swing,
            x0: state_to_local(&frame, &input.x_start),
            p0: quantize3(frame.point_to_local(&input.feet[input.swing.index()].position)),
            preview,
            goal: quantize3(frame.point_to_local(&ctx.goal.com_position)),
        })
    }

    pub fn encode(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(INPUT_DIM);
        v.push(self.swing.sign());
        v.extend_from_slice(&self.x0.to_array());
        v.extend_from_slice(self.p0.as_slice());
        for quad in &self.preview {
            for p in quad {
                v.extend_from_slice(p.as_slice());
            }
        }
        v.extend_from_slice(self.goal.as_slice());
        v
    }
}

/// Local objective of one step, in the stance-foot frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleTarget {
    pub x_star: CentroidalState,
    /// On-surface coordinates of the footstep on the step surface.
    pub alpha: [f64; 2],
    /// Phase switching times from the cycle start [s].
    pub timings: [f64; 3],
}

impl OracleTarget {
    /// Regression target: state, α, and the three phase durations.
    pub fn encode(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(OUTPUT_DIM);
        v.extend_from_slice(&self.x_star.to_array());
        v.extend_from_slice(&self.alpha);
        let t = self.timings;
        v.extend_from_slice(&[t[0], t[1] - t[0], t[2] - t[1]]);
        v
    }

    /// Inverse of [`OracleTarget::encode`], with α clamped to `[0, 1]` and
    /// durations to the minimum phase duration.
    pub fn decode(v: &[f64]) -> Result<Self> {
        if v.len() != OUTPUT_DIM {
            return Err(PlanError::Dimension {
                what: "oracle output",
                expected: OUTPUT_DIM,
                got: v.len(),
            });
        }
        let d = [v[11], v[12], v[13]].map(|d| if d.is_finite() { d.max(MIN_PHASE_DURATION) } else { DEFAULT_PHASE_DURATION });
        Ok(Self {
            x_star: CentroidalState::from_slice(&v[0..9])?,
            alpha: [v[9].clamp(0.0, 1.0), v[10].clamp(0.0, 1.0)],
            timings: [d[0], d[0] + d[1], d[0] + d[1] + d[2]],
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleSample {
    pub input: OracleInput,
    pub target: OracleTarget,
}

/// Local objective in world coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalObjective {
    pub x_star: CentroidalState,
    pub alpha: [f64; 2],
    /// Target footstep `on_surface_point(surface, α)`.
    pub footstep: Vec3,
    pub switch_times: [f64; 3],
}

impl LocalObjective {
    pub fn from_target(target: &OracleTarget, frame: &FootFrame, terrain: &Terrain, surface: usize) -> Result<Self> {
        Ok(Self {
            x_star: state_to_world(frame, &target.x_star),
            alpha: target.alpha,
            footstep: on_surface_point(terrain.surface(surface)?, target.alpha[0], target.alpha[1])?,
            switch_times: target.timings,
        })
    }
}

/// One sample per converged cycle: the cycle start as input, the solved
/// execution horizon as target. Returns the samples and a diagnostic for each
/// rejected cycle.
pub fn extract_samples(
    episode: &EpisodeRecord,
    terrain: &Terrain,
    goal: &CentroidalState,
) -> Result<(Vec<OracleSample>, Vec<String>)> {
    extract_from_cycles(&episode.cycles, terrain, goal)
}

fn extract_from_cycles(
    cycles: &[CycleRecord],
    terrain: &Terrain,
    goal: &CentroidalState,
) -> Result<(Vec<OracleSample>, Vec<String>)> {
    let mut samples = Vec::new();
    let mut rejected = Vec::new();
    for c in cycles {
        let Some(plan) = c.plan.as_ref().filter(|_| c.converged()) else {
            rejected.push(format!("cycle {}: not converged", c.input.index));
            continue;
        };
        let input = OracleInput::from_context(&CycleContext {
            terrain,
            input: &c.input,
            goal,
        })?;
        let frame = stance_frame(&c.input.feet, c.input.stance(), terrain)?;
        let step = plan.footsteps[0];
        let surface = terrain.surface(step.surface_index)?;
        let (a1, a2) = surface.surface_coordinates(&step.position);
        let alpha = [a1.clamp(0.0, 1.0), a2.clamp(0.0, 1.0)];
        let rebuilt = on_surface_point(surface, alpha[0], alpha[1])?;
        let off = (rebuilt - step.position).norm();
        if off > SURFACE_TOLERANCE {
            rejected.push(format!("cycle {}: footstep {off:.2e} m off its surface", c.input.index));
            continue;
        }
        let t = plan.switch_times();
        let x_end = plan
            .step_terminal_state(0)
            .ok_or_else(|| PlanError::Structure("plan has no executed step".into()))?;
        samples.push(OracleSample {
            input,
            target: OracleTarget {
                x_star: state_to_local(&frame, &x_end),
                alpha,
                timings: [t[0], t[1], t[2]],
            },
        });
    }
    Ok((samples, rejected))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Normalization {
    pub fn identity(dim: usize) -> Self {
        Self {
            mean: vec![0.0; dim],
            std: vec![1.0; dim],
        }
    }

    /// Per-feature statistics; near-constant features get unit scale.
    pub fn fit(rows: &[Vec<f64>]) -> Self {
        let dim = rows.first().map_or(0, |r| r.len());
        let n = rows.len().max(1) as f64;
        let mut mean = vec![0.0; dim];
        for r in rows {
            for (m, v) in mean.iter_mut().zip(r) {
                *m += v / n;
            }
        }
        let mut std = vec![0.0; dim];
        for r in rows {
            for ((s, v), m) in std.iter_mut().zip(r).zip(&mean) {
                *s += (v - m).powi(2) / n;
            }
        }
        for s in &mut std {
            *s = if s.sqrt() > 1e-8 { s.sqrt() } else { 1.0 };
        }
        Self { mean, std }
    }

    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        v.iter().zip(&self.mean).zip(&self.std).map(|((x, m), s)| (x - m) / s).collect()
    }

    pub fn invert(&self, v: &[f64]) -> Vec<f64> {
        v.iter().zip(&self.mean).zip(&self.std).map(|((x, m), s)| x * s + m).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum OracleKind {
    /// Fully connected ReLU network with the given hidden widths.
    Mlp { hidden: Vec<usize> },
    Knn { k: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleModel {
    pub schema_version: u32,
    pub kind: OracleKind,
    /// MLP weights, layer by layer: row-major `W` then `b`.
    pub params: Vec<f64>,
    /// k-NN memory: normalized inputs and their targets.
    pub memory_inputs: Vec<Vec<f64>>,
    pub memory_targets: Vec<OracleTarget>,
    pub input_norm: Normalization,
    pub output_norm: Normalization,
}

pub fn layer_sizes(hidden: &[usize]) -> Vec<usize> {
    let mut s = vec![INPUT_DIM];
    s.extend_from_slice(hidden);
    s.push(OUTPUT_DIM);
    s
}

pub fn param_count(sizes: &[usize]) -> usize {
    sizes.windows(2).map(|w| w[1] * (w[0] + 1)).sum()
}

/// Network output for one (normalized) input.
pub fn mlp_forward(sizes: &[usize], params: &[f64], x: &[f64]) -> Vec<f64> {
    let mut a = x.to_vec();
    let mut off = 0;
    let last = sizes.len() - 2;
    for (l, w) in sizes.windows(2).enumerate() {
        let (n_in, n_out) = (w[0], w[1]);
        let weights = &params[off..off + n_in * n_out];
        let bias = &params[off + n_in * n_out..off + n_in * n_out + n_out];
        off += n_out * (n_in + 1);
        let mut z: Vec<f64> = (0..n_out)
            .map(|o| bias[o] + weights[o * n_in..(o + 1) * n_in].iter().zip(&a).map(|(w, x)| w * x).sum::<f64>())
            .collect();
        if l < last {
            for v in &mut z {
                *v = v.max(0.0);
            }
        }
        a = z;
    }
    a
}

/// Mean squared error over all samples and outputs, and its gradient.
pub fn mlp_loss_and_gradient(sizes: &[usize], params: &[f64], xs: &[&[f64]], ys: &[&[f64]]) -> (f64, Vec<f64>) {
    let mut grad = vec![0.0; params.len()];
    let mut loss = 0.0;
    let layers = sizes.len() - 1;
    let offsets: Vec<usize> = sizes
        .windows(2)
        .scan(0, |off, w| {
            let o = *off;
            *off += w[1] * (w[0] + 1);
            Some(o)
        })
        .collect();
    let scale = 1.0 / (xs.len() * sizes[layers]) as f64;
    for (x, y) in xs.iter().zip(ys) {
        // Forward, keeping activations.
        let mut acts: Vec<Vec<f64>> = vec![x.to_vec()];
        for l in 0..layers {
            let (n_in, n_out) = (sizes[l], sizes[l + 1]);
            let w = &params[offsets[l]..offsets[l] + n_in * n_out];
            let b = &params[offsets[l] + n_in * n_out..offsets[l] + n_out * (n_in + 1)];
            let a = &acts[l];
            let z: Vec<f64> = (0..n_out)
                .map(|o| {
                    let v = b[o] + w[o * n_in..(o + 1) * n_in].iter().zip(a).map(|(w, x)| w * x).sum::<f64>();
                    if l + 1 < layers {
                        v.max(0.0)
                    } else {
                        v
                    }
                })
                .collect();
            acts.push(z);
        }
        let out = &acts[layers];
        let mut delta: Vec<f64> = out.iter().zip(*y).map(|(o, t)| o - t).collect();
        loss += delta.iter().map(|d| d * d).sum::<f64>() * scale;
        for d in &mut delta {
            *d *= 2.0 * scale;
        }
        for l in (0..layers).rev() {
            let (n_in, n_out) = (sizes[l], sizes[l + 1]);
            let a = &acts[l];
            let off = offsets[l];
            for o in 0..n_out {
                let d = delta[o];
                if d == 0.0 {
                    continue;
                }
                for i in 0..n_in {
                    grad[off + o * n_in + i] += d * a[i];
                }
                grad[off + n_in * n_out + o] += d;
            }
            if l > 0 {
                let w = &params[off..off + n_in * n_out];
                let mut prev = vec![0.0; n_in];
                for o in 0..n_out {
                    for i in 0..n_in {
                        prev[i] += w[o * n_in + i] * delta[o];
                    }
                }
                for (p, a) in prev.iter_mut().zip(a) {
                    if *a <= 0.0 {
                        *p = 0.0;
                    }
                }
                delta = prev;
            }
        }
    }
    (loss, grad)
}

impl OracleModel {
    /// MLP with every weight zero.
    pub fn zero_mlp(hidden: Vec<usize>, input_norm: Normalization, output_norm: Normalization) -> Self {
        let n = param_count(&layer_sizes(&hidden));
        Self {
            schema_version: SCHEMA_VERSION,
            kind: OracleKind::Mlp { hidden },
            params: vec![0.0; n],
            memory_inputs: Vec::new(),
            memory_targets: Vec::new(),
            input_norm,
            output_norm,
        }
    }

    pub fn fit_knn(samples: &[OracleSample], k: usize) -> Result<Self> {
        if k == 0 || samples.len() < k {
            return Err(PlanError::Training(format!("k-NN needs 1 <= k <= {} samples", samples.len())));
        }
        let inputs: Vec<Vec<f64>> = samples.iter().map(|s| s.input.encode()).collect();
        let input_norm = Normalization::fit(&inputs);
        Ok(Self {
            schema_version: SCHEMA_VERSION,
            kind: OracleKind::Knn { k },
            params: Vec::new(),
            memory_inputs: inputs.iter().map(|x| input_norm.apply(x)).collect(),
            memory_targets: samples.iter().map(|s| s.target.clone()).collect(),
            input_norm,
            output_norm: Normalization::identity(OUTPUT_DIM),
        })
    }

    /// Raw network output (before decoding) for an encoded input.
    pub fn predict_encoded(&self, x: &[f64]) -> Result<Vec<f64>> {
        let OracleKind::Mlp { hidden } = &self.kind else {
            return Err(PlanError::Structure("not an MLP".into()));
        };
        self.check_input(x)?;
        let z = mlp_forward(&layer_sizes(hidden), &self.params, &self.input_norm.apply(x));
        Ok(self.output_norm.invert(&z))
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != INPUT_DIM || self.input_norm.mean.len() != INPUT_DIM {
            return Err(PlanError::Dimension {
                what: "oracle input",
                expected: INPUT_DIM,
                got: x.len(),
            });
        }
        Ok(())
    }

    pub fn predict(&self, input: &OracleInput) -> Result<OracleTarget> {
        let x = input.encode();
        match &self.kind {
            OracleKind::Mlp { .. } => OracleTarget::decode(&self.predict_encoded(&x)?),
            OracleKind::Knn { k } => {
                self.check_input(&x)?;
                let q = self.input_norm.apply(&x);
                let mut d: Vec<(f64, usize)> = self
                    .memory_inputs
                    .iter()
                    .enumerate()
                    .map(|(i, m)| (m.iter().zip(&q).map(|(a, b)| (a - b).powi(2)).sum::<f64>(), i))
                    .collect();
                d.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
                let near: Vec<&OracleTarget> = d.iter().take(*k).map(|&(_, i)| &self.memory_targets[i]).collect();
                if near.len() == 1 {
                    return Ok(near[0].clone());
                }
                let n = near.len() as f64;
                let mut x = [0.0; 9];
                let mut alpha = [0.0; 2];
                let mut timings = [0.0; 3];
                for t in &near {
                    for (a, v) in x.iter_mut().zip(t.x_star.to_array()) {
                        *a += v / n;
                    }
                    for j in 0..2 {
                        alpha[j] += t.alpha[j] / n;
                    }
                    for j in 0..3 {
                        timings[j] += t.timings[j] / n;
                    }
                }
                Ok(OracleTarget {
                    x_star: CentroidalState::from_slice(&x)?,
                    alpha,
                    timings,
                })
            }
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = to_json(self)?;
        fs::write(path, text).map_err(|e| PlanError::Io(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| PlanError::Io(e.to_string()))?;
        let model: Self = serde_json::from_str(&text).map_err(|e| PlanError::Parse(e.to_string()))?;
        if model.schema_version != SCHEMA_VERSION {
            return Err(PlanError::Parse(format!("unsupported model schema {}", model.schema_version)));
        }
        Ok(model)
    }
}

impl Guide for OracleModel {
    fn local_objective(&self, ctx: &CycleContext) -> Result<LocalObjective> {
        let input = OracleInput::from_context(ctx)?;
        let target = self.predict(&input)?;
        let frame = stance_frame(&ctx.input.feet, ctx.input.stance(), ctx.terrain)?;
        let surface = *ctx
            .terrain
            .step_sequence
            .get(ctx.input.cursor)
            .ok_or_else(|| PlanError::Structure("cursor past the last step".into()))?;
        LocalObjective::from_target(&target, &frame, ctx.terrain, surface)
    }
}

#[derive(Serialize, Deserialize)]
struct DatasetHeader {
    schema_version: u32,
    samples: usize,
}

/// Writes a header line and one JSON record per sample.
pub fn save_dataset(path: &Path, samples: &[OracleSample]) -> Result<()> {
    fs::write(path, dataset_to_string(samples)?).map_err(|e| PlanError::Io(e.to_string()))
}

fn to_json<T: Serialize>(value: &T) -> Result<String> {
    serde_json::to_string(value).map_err(|e| PlanError::Parse(e.to_string()))
}

pub fn dataset_to_string(samples: &[OracleSample]) -> Result<String> {
    let mut out = to_json(&DatasetHeader {
        schema_version: SCHEMA_VERSION,
        samples: samples.len(),
    })?;
    out.push('\n');
    for s in samples {
        out.push_str(&to_json(s)?);
        out.push('\n');
    }
    Ok(out)
}

pub fn dataset_from_str(text: &str) -> Result<Vec<OracleSample>> {
    let mut lines = text.lines();
    let header: DatasetHeader = serde_json::from_str(lines.next().unwrap_or(""))
        .map_err(|e| PlanError::Parse(format!("dataset header: {e}")))?;
    if header.schema_version != SCHEMA_VERSION {
        return Err(PlanError::Parse(format!("unsupported dataset schema {}", header.schema_version)));
    }
    let samples: Vec<OracleSample> = lines
        .enumerate()
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| PlanError::Parse(format!("record {}: {e}", i + 1))))
        .collect::<Result<_>>()?;
    if samples.len() != header.samples {
        return Err(PlanError::Parse(format!("header announces {} records, found {}", header.samples, samples.len())));
    }
    Ok(samples)
}

pub fn load_dataset(path: &Path) -> Result<Vec<OracleSample>> {
    dataset_from_str(&fs::read_to_string(path).map_err(|e| PlanError::Io(e.to_string()))?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainOptions {
    pub hidden: Vec<usize>,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    /// Held-out share used to pick the returned parameters (only with ≥ 10 samples).
    pub validation_fraction: f64,
}

impl Default for TrainOptions {
    fn default() -> Self {
        Self {
            hidden: vec![64; 3],
            epochs: 300,
            batch_size: 32,
            learning_rate: 1e-3,
            seed: 0,
            validation_fraction: 0.2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub initial_train_loss: f64,
    pub final_train_loss: f64,
    pub best_validation_loss: f64,
    pub best_epoch: usize,
}

/// Mini-batch Adam on the mean squared error of normalized targets. Returns
/// the parameters with the lowest validation loss.
pub fn train_mlp(samples: &[OracleSample], options: &TrainOptions) -> Result<(OracleModel, TrainReport)> {
    if options.batch_size == 0 || samples.len() < options.batch_size {
        return Err(PlanError::Training(format!(
            "{} samples for batch size {}",
            samples.len(),
            options.batch_size
        )));
    }
    if !(options.learning_rate > 0.0) || !(0.0..1.0).contains(&options.validation_fraction) {
        return Err(PlanError::Training("invalid learning rate or validation fraction".into()));
    }
    let inputs: Vec<Vec<f64>> = samples.iter().map(|s| s.input.encode()).collect();
    let targets: Vec<Vec<f64>> = samples.iter().map(|s| s.target.encode()).collect();
    let input_norm = Normalization::fit(&inputs);
    let output_norm = Normalization::fit(&targets);
    let xs: Vec<Vec<f64>> = inputs.iter().map(|x| input_norm.apply(x)).collect();
    let ys: Vec<Vec<f64>> = targets.iter().map(|y| output_norm.apply(y)).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    let mut order: Vec<usize> = (0..samples.len()).collect();
    order.shuffle(&mut rng);
    let n_val = if samples.len() >= 10 {
        ((samples.len() as f64 * options.validation_fraction).round() as usize).clamp(1, samples.len() - options.batch_size.min(samples.len() - 1))
    } else {
        0
    };
    let (val_idx, train_idx) = order.split_at(n_val);
    let mut train_idx = train_idx.to_vec();
    let val_idx: Vec<usize> = if val_idx.is_empty() { train_idx.clone() } else { val_idx.to_vec() };

    let sizes = layer_sizes(&options.hidden);
    let mut params = vec![0.0; param_count(&sizes)];
    let mut off = 0;
    for w in sizes.windows(2) {
        let bound = (6.0 / w[0] as f64).sqrt();
        for p in &mut params[off..off + w[0] * w[1]] {
            *p = rng.random_range(-bound..bound);
        }
        off += w[1] * (w[0] + 1);
    }
    let loss_on = |params: &[f64], idx: &[usize]| {
        let x: Vec<&[f64]> = idx.iter().map(|&i| xs[i].as_slice()).collect();
        let y: Vec<&[f64]> = idx.iter().map(|&i| ys[i].as_slice()).collect();
        mlp_loss_and_gradient(&sizes, params, &x, &y).0
    };
    let initial_train_loss = loss_on(&params, &train_idx);
    let mut best = (loss_on(&params, &val_idx), 0usize, params.clone());
    let (b1, b2, eps) = (0.9f64, 0.999f64, 1e-8);
    let mut m = vec![0.0; params.len()];
    let mut v = vec![0.0; params.len()];
    let mut t = 0i32;
    for epoch in 1..=options.epochs {
        train_idx.shuffle(&mut rng);
        for (bi, batch) in train_idx.chunks(options.batch_size).enumerate() {
            let x: Vec<&[f64]> = batch.iter().map(|&i| xs[i].as_slice()).collect();
            let y: Vec<&[f64]> = batch.iter().map(|&i| ys[i].as_slice()).collect();
            let (loss, grad) = mlp_loss_and_gradient(&sizes, &params, &x, &y);
            if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(PlanError::Training(format!("non-finite loss at epoch {epoch}, batch {bi}")));
            }
            t += 1;
            let (c1, c2) = (1.0 - b1.powi(t), 1.0 - b2.powi(t));
            for i in 0..params.len() {
                m[i] = b1 * m[i] + (1.0 - b1) * grad[i];
                v[i] = b2 * v[i] + (1.0 - b2) * grad[i] * grad[i];
                params[i] -= options.learning_rate * (m[i] / c1) / ((v[i] / c2).sqrt() + eps);
            }
        }
        let val = loss_on(&params, &val_idx);
        if val < best.0 {
            best = (val, epoch, params.clone());
        }
    }
    let (best_validation_loss, best_epoch, params) = best;
    let final_train_loss = loss_on(&params, &train_idx);
    let model = OracleModel {
        schema_version: SCHEMA_VERSION,
        kind: OracleKind::Mlp {
            hidden: options.hidden.clone(),
        },
        params,
        memory_inputs: Vec::new(),
        memory_targets: Vec::new(),
        input_norm,
        output_norm,
    };
    Ok((
        model,
        TrainReport {
            initial_train_loss,
            final_train_loss,
            best_validation_loss,
            best_epoch,
        },
    ))
}

/// One-step full-model problem steered by a local objective: terminal cost
/// towards `x*` and `p*`, switching times windowed to `[(1−ε)t̃, (1+ε)t̃]`.
#[allow(clippy::too_many_arguments)]
pub fn build_lg_problem(
    objective: &LocalObjective,
    epsilon: f64,
    x_start: &CentroidalState,
    feet: [Footstep; 2],
    swing: Foot,
    surface: usize,
    terrain: &Terrain,
    robot: &RobotModel,
    knots_per_phase: usize,
) -> Result<TranscribedProblem> {
    if !(epsilon >= 0.0) {
        return Err(PlanError::Range("epsilon must be non-negative".into()));
    }
    let t = objective.switch_times;
    if !(t[0] > 0.0 && t[0] < t[1] && t[1] < t[2]) {
        return Err(PlanError::Range("predicted switching times must be positive and increasing".into()));
    }
    let window = t.map(|v| ((1.0 - epsilon) * v, (1.0 + epsilon) * v));
    let terminal = TerminalCost {
        state: objective.x_star,
        weight: 1.0,
        footstep: Some(objective.footstep),
        footstep_weight: 1.0,
    };
    let spec = ProblemSpec {
        knots_per_phase,
        t_max: (1.2f64).max(window[2].1),
        min_phase_duration: MIN_PHASE_DURATION,
        default_phase_duration: DEFAULT_PHASE_DURATION,
        x_init: *x_start,
        feet,
        steps: vec![StepSpec {
            swing,
            surface,
            model: PhaseModel::Full,
            timing: StepTiming::Window(window),
        }],
        terminal,
        weights: CostWeights::default(),
    };
    build(&spec, terrain, robot)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IncrementalOptions {
    pub iterations: usize,
    /// Iterations run before the no-improvement stop applies.
    pub min_iterations: usize,
    pub train: TrainOptions,
    /// Locally guided planner being trained.
    pub learner: RhpConfig,
    /// Expert planner providing recovery demonstrations.
    pub expert: RhpConfig,
    pub max_rewind: usize,
    /// RMS state distance, normalized per component by the dataset spread.
    pub rejoin_distance: f64,
    /// Expert cycles per recovery attempt.
    pub max_recovery_cycles: usize,
}

impl Default for IncrementalOptions {
    fn default() -> Self {
        Self {
            iterations: 3,
            min_iterations: 3,
            train: TrainOptions::default(),
            learner: RhpConfig::new(PlannerMode::LocallyGuided { epsilon: 0.15 }, 0),
            expert: RhpConfig::new(PlannerMode::BaselineFullModel, 3),
            max_rewind: 3,
            rejoin_distance: 0.5,
            max_recovery_cycles: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingIteration {
    pub dataset_size: usize,
    pub validation_loss: f64,
    pub success_rate: f64,
    pub failed_terrains: Vec<String>,
    /// Samples added after this iteration's rollouts.
    pub added: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingRun {
    pub iterations: Vec<TrainingIteration>,
    pub dataset: Vec<OracleSample>,
    pub model: OracleModel,
    pub diagnostics: Vec<String>,
}

impl TrainingRun {
    pub fn success_rates(&self) -> Vec<f64> {
        self.iterations.iter().map(|i| i.success_rate).collect()
    }
}

/// A named terrain with its start and goal.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub id: String,
    pub terrain: Terrain,
    pub x_init: CentroidalState,
    pub goal: CentroidalState,
}

impl Scene {
    pub fn new(id: impl Into<String>, terrain: Terrain, robot: &RobotModel) -> Result<Self> {
        Ok(Self {
            id: id.into(),
            x_init: rhp::start_state(&terrain, robot)?,
            goal: rhp::goal_state(&terrain, robot)?,
            terrain,
        })
    }
}

pub fn episode_succeeded(e: &EpisodeRecord) -> bool {
    e.reached_goal && e.outcome != rhp::EpisodeOutcome::FailToConverge
}

/// Runs the learner on every scene; returns the episodes.
pub fn rollout(
    model: &OracleModel,
    scenes: &[Scene],
    config: &RhpConfig,
    solver: &dyn CycleSolver,
) -> Result<Vec<EpisodeRecord>> {
    scenes
        .iter()
        .map(|s| run_episode(config, &s.terrain, &s.id, &s.x_init, &s.goal, Some(model), solver))
        .collect()
}

fn state_distance(a: &CentroidalState, b: &CentroidalState, scale: &[f64]) -> f64 {
    let (a, b) = (a.to_array(), b.to_array());
    let s: f64 = (0..9).map(|i| ((a[i] - b[i]) / scale[i]).powi(2)).sum();
    (s / 9.0).sqrt()
}

/// Expert demonstrations from `start` until its executed state rejoins the
/// reference trajectory; `None` if the expert fails or never rejoins.
#[allow(clippy::too_many_arguments)]
fn recover(
    start: &CycleInput,
    reference: &EpisodeRecord,
    scene: &Scene,
    options: &IncrementalOptions,
    scale: &[f64],
    solver: &dyn CycleSolver,
) -> Result<Option<Vec<CycleRecord>>> {
    let mut cycles: Vec<CycleRecord> = Vec::new();
    let mut input = CycleInput { index: 0, ..*start };
    let steps = scene.terrain.step_sequence.len();
    while cycles.len() < options.max_recovery_cycles && input.cursor < steps {
        let record = run_cycle(&options.expert, &scene.terrain, &scene.goal, &input, cycles.last(), None, solver)?;
        if !record.converged() {
            return Ok(None);
        }
        let reached = record.eh_terminal_state().expect("converged cycle has a plan");
        let cursor = record.input.cursor;
        input = handoff(&record)?;
        cycles.push(record);
        let truth = reference.cycles.iter().find(|c| c.input.cursor == cursor).and_then(|c| c.eh_terminal_state());
        let rejoined = truth.is_some_and(|t| state_distance(&reached, &t, scale) <= options.rejoin_distance);
        if rejoined || input.cursor >= steps {
            return Ok(Some(cycles));
        }
    }
    Ok(None)
}

/// Dataset aggregation with expert recovery demonstrations.
pub fn incremental_train(
    initial: &[OracleSample],
    scenes: &[Scene],
    options: &IncrementalOptions,
    solver: &dyn CycleSolver,
) -> Result<TrainingRun> {
    if options.iterations == 0 {
        return Err(PlanError::Training("at least one iteration is required".into()));
    }
    let mut dataset = initial.to_vec();
    let mut diagnostics = Vec::new();
    // Ground-truth trajectories from the expert.
    let references: Vec<EpisodeRecord> = scenes
        .iter()
        .map(|s| run_episode(&options.expert, &s.terrain, &s.id, &s.x_init, &s.goal, None, solver))
        .collect::<Result<_>>()?;
    let mut iterations: Vec<TrainingIteration> = Vec::new();
    let mut model;
    loop {
        let (m, report) = train_mlp(&dataset, &options.train)?;
        model = m;
        let episodes = rollout(&model, scenes, &options.learner, solver)?;
        let failed: Vec<usize> = (0..scenes.len()).filter(|&i| !episode_succeeded(&episodes[i])).collect();
        let success_rate = 100.0 * (scenes.len() - failed.len()) as f64 / scenes.len().max(1) as f64;
        let i = iterations.len();
        iterations.push(TrainingIteration {
            dataset_size: dataset.len(),
            validation_loss: report.best_validation_loss,
            success_rate,
            failed_terrains: failed.iter().map(|&j| scenes[j].id.clone()).collect(),
            added: 0,
        });
        let improved = i == 0 || success_rate >= iterations[i - 1].success_rate + 1.0;
        let stop = iterations.len() >= options.iterations
            || failed.is_empty()
            || (iterations.len() >= options.min_iterations.max(1) && !improved);
        if stop {
            break;
        }
        // Recovery demonstrations around each failure.
        let scale: Vec<f64> = model.output_norm.std[0..9].to_vec();
        let mut added = Vec::new();
        for &j in &failed {
            let scene = &scenes[j];
            let episode = &episodes[j];
            let fail_at = episode.cycles.len().saturating_sub(1);
            let mut recovered = false;
            for depth in 1..=options.max_rewind {
                let at = fail_at.saturating_sub(depth);
                let start = episode.cycles[at].input;
                match recover(&start, &references[j], scene, options, &scale, solver)? {
                    Some(cycles) => {
                        let (samples, rejected) = extract_from_cycles(&cycles, &scene.terrain, &scene.goal)?;
                        diagnostics.extend(rejected.into_iter().map(|r| format!("{}: {r}", scene.id)));
                        added.extend(samples);
                        recovered = true;
                        break;
                    }
                    None if at == 0 => break,
                    None => {}
                }
            }
            if !recovered {
                diagnostics.push(format!("{}: expert could not recover near cycle {fail_at}", scene.id));
            }
        }
        iterations[i].added = added.len();
        if added.is_empty() {
            break;
        }
        dataset.extend(added);
    }
    Ok(TrainingRun {
        iterations,
        dataset,
        model,
        diagnostics,
    })
}

/// Builds the initial dataset from expert episodes on `scenes`.
pub fn expert_dataset(
    scenes: &[Scene],
    expert: &RhpConfig,
    solver: &dyn CycleSolver,
) -> Result<(Vec<OracleSample>, Vec<String>)> {
    let mut samples = Vec::new();
    let mut diagnostics = Vec::new();
    for s in scenes {
        let e = run_episode(expert, &s.terrain, &s.id, &s.x_init, &s.goal, None, solver)?;
        let (mut got, rejected) = extract_samples(&e, &s.terrain, &s.goal)?;
        samples.append(&mut got);
        diagnostics.extend(rejected.into_iter().map(|r| format!("{}: {r}", s.id)));
        if !episode_succeeded(&e) {
            diagnostics.push(format!("{}: expert episode ended {:?}", s.id, e.outcome));
        }
    }
    Ok((samples, diagnostics))
}
