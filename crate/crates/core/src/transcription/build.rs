use nalgebra::Matrix3;

use super::plan::{MotionPlan, PhasePlan, PlanContact};
use super::{PhaseKind, PhaseModel, ProblemSpec, StepTiming, TerminalCost};
use super::{HorizonSpec, StepSpec, CostWeights, DEFAULT_PHASE_DURATION, MIN_PHASE_DURATION};
use crate::error::{PlanError, Result};
use crate::expr::{Affine, Expr};
use crate::model::{on_surface_point, surface_to_halfplanes, CentroidalState, ControlKnot, Foot, Footstep, RobotModel, Terrain, Vec3};
use crate::nlp::{Nlp, NlpBuilder};
use crate::relaxations::{relax_bilinear, BilinearCell};

type AffVec = [Affine; 3];

fn var3(start: usize) -> AffVec {
    [Affine::var(start), Affine::var(start + 1), Affine::var(start + 2)]
}

fn const3(v: &Vec3) -> AffVec {
    [Affine::constant(v.x), Affine::constant(v.y), Affine::constant(v.z)]
}

fn sub3(a: &AffVec, b: &AffVec) -> AffVec {
    [a[0].clone() - b[0].clone(), a[1].clone() - b[1].clone(), a[2].clone() - b[2].clone()]
}

fn offset3(a: &AffVec, v: &Vec3) -> AffVec {
    [a[0].clone() + v.x, a[1].clone() + v.y, a[2].clone() + v.z]
}

fn dot3(w: &Vec3, a: &AffVec) -> Affine {
    a[0].clone() * w.x + a[1].clone() * w.y + a[2].clone() * w.z
}

fn eval3(a: &AffVec, x: &[f64]) -> Vec3 {
    Vec3::new(a[0].eval(x), a[1].eval(x), a[2].eval(x))
}

/// The three relaxed moment components of `lever × force`, with ψ pairs
/// starting at `ps`.
fn moment_cells(lever: &AffVec, force: &AffVec, ps: usize) -> [BilinearCell; 3] {
    std::array::from_fn(|a| {
        let (u, w) = ((a + 1) % 3, (a + 2) % 3);
        BilinearCell {
            alpha: lever[u].clone(),
            beta: force[w].clone(),
            minus: Some((lever[w].clone(), force[u].clone())),
            psi_plus: ps + 2 * a,
            psi_minus: ps + 2 * a + 1,
        }
    })
}

/// Resultant (body-weight units) of the forces starting at `first`.
fn resultant(first: &[usize]) -> AffVec {
    std::array::from_fn(|a| {
        let mut e = Affine::default();
        for &fi in first {
            e.add_term(fi + a, 1.0);
        }
        e
    })
}

/// Decision variables of one knot.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KnotVars {
    pub c: usize,
    pub cd: usize,
    pub l: Option<usize>,
}

/// A foot in contact during a phase.
#[derive(Debug, Clone, PartialEq)]
pub struct ContactLayout {
    pub foot: Foot,
    pub surface: usize,
    pub center: [Affine; 3],
    pub rotation: Matrix3<f64>,
    /// World offsets of the contact points from the foot center.
    pub offsets: Vec<Vec3>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhaseLayout {
    pub kind: PhaseKind,
    pub step: usize,
    pub model: PhaseModel,
    pub start: Affine,
    pub end: Affine,
    pub first_knot: usize,
    pub contacts: Vec<ContactLayout>,
    /// Per interval, the first force variable of every contact point (contacts flattened in order).
    pub forces: Vec<Vec<usize>>,
    /// Per interval, the first of the six ψ variables of every contact.
    pub psi: Vec<Vec<usize>>,
    pub time_var: Option<usize>,
}

impl PhaseLayout {
    pub fn num_points(&self) -> usize {
        self.contacts.iter().map(|c| c.offsets.len()).sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layout {
    pub knots: Vec<KnotVars>,
    pub phases: Vec<PhaseLayout>,
    /// First variable of each step's footstep position.
    pub footsteps: Vec<usize>,
}

/// A transcribed horizon: the NLP plus the map between its variables and plan quantities.
#[derive(Debug, Clone)]
pub struct TranscribedProblem {
    pub nlp: Nlp,
    pub layout: Layout,
    pub spec: ProblemSpec,
    pub robot: RobotModel,
    pub terrain: Terrain,
}

/// Half the lateral distance between the feet of the default start stance [m].
pub const NOMINAL_HALF_STANCE: f64 = 0.1;

/// Start stance: each foot on its start surface, as close as the surface
/// allows to `NOMINAL_HALF_STANCE` either side of the midpoint between the
/// two surface centers.
pub fn default_start_feet(terrain: &Terrain) -> Result<[Footstep; 2]> {
    let left = terrain.surface(terrain.start_surface(Foot::Left))?;
    let right = terrain.surface(terrain.start_surface(Foot::Right))?;
    let mid = 0.5 * (left.center() + right.center());
    let mut feet = [Footstep::new(Vec3::zeros(), 0); 2];
    for (foot, surf) in [(Foot::Left, left), (Foot::Right, right)] {
        let mut target = surf.center();
        if terrain.start_surface(Foot::Left) != terrain.start_surface(Foot::Right) {
            target.y = mid.y + foot.sign() * NOMINAL_HALF_STANCE;
        } else {
            target.y += foot.sign() * NOMINAL_HALF_STANCE;
        }
        let (a1, a2) = surf.surface_coordinates(&target);
        let p = on_surface_point(surf, a1.clamp(0.05, 0.95), a2.clamp(0.05, 0.95))?;
        feet[foot.index()] = Footstep::new(p, terrain.start_surface(foot));
    }
    Ok(feet)
}

/// Full-model horizon over the first `horizon.steps` surfaces of the terrain's
/// step sequence, from the start stance.
pub fn build_baseline(
    horizon: &HorizonSpec,
    terrain: &Terrain,
    x_init: &CentroidalState,
    x_goal: &CentroidalState,
    robot: &RobotModel,
) -> Result<TranscribedProblem> {
    horizon.validate()?;
    let mut steps = Vec::with_capacity(horizon.steps);
    for i in 0..horizon.steps {
        let surface = *terrain.step_sequence.get(i).ok_or(PlanError::MissingSurface {
            index: i,
            count: terrain.step_sequence.len(),
        })?;
        steps.push(StepSpec {
            swing: horizon.swing_foot(i),
            surface,
            model: PhaseModel::Full,
            timing: StepTiming::Free,
        });
    }
    let spec = ProblemSpec {
        knots_per_phase: horizon.knots_per_phase,
        t_max: horizon.t_max,
        min_phase_duration: MIN_PHASE_DURATION,
        default_phase_duration: DEFAULT_PHASE_DURATION,
        x_init: *x_init,
        feet: default_start_feet(terrain)?,
        steps,
        terminal: TerminalCost::to_state(*x_goal),
        weights: CostWeights::default(),
    };
    build(&spec, terrain, robot)
}

struct Alloc {
    next: [usize; 5],
}

const TIME: usize = 0;
const FOOT: usize = 1;
const STATE: usize = 2;
const CONTROL: usize = 3;
const AUX: usize = 4;

impl Alloc {
    fn take(&mut self, cat: usize, n: usize) -> usize {
        let s = self.next[cat];
        self.next[cat] += n;
        s
    }
}

fn active_feet(kind: PhaseKind, swing: Foot) -> Vec<Foot> {
    match kind {
        PhaseKind::Swing => vec![swing.other()],
        _ => vec![Foot::Left, Foot::Right],
    }
}

/// Transcribes a horizon described by `spec`.
pub fn build(spec: &ProblemSpec, terrain: &Terrain, robot: &RobotModel) -> Result<TranscribedProblem> {
    let nk = spec.knots_per_phase;
    if nk == 0 {
        return Err(PlanError::Range("knots_per_phase must be at least 1".into()));
    }
    if !(spec.t_max > 0.0) || spec.min_phase_duration < 0.0 {
        return Err(PlanError::Range("invalid timing limits".into()));
    }
    if !spec.x_init.is_finite() {
        return Err(PlanError::Range("initial state is not finite".into()));
    }
    for step in &spec.steps {
        terrain.surface(step.surface)?;
        if let StepTiming::Fixed(d) = step.timing {
            if d.iter().any(|v| !(*v > 0.0)) {
                return Err(PlanError::Range("fixed phase durations must be positive".into()));
            }
        }
    }
    for f in &spec.feet {
        terrain.surface(f.surface_index)?;
    }
    let models: Vec<PhaseModel> = spec.steps.iter().flat_map(|s| [s.model; 3]).collect();
    if let Some(first_relaxed) = models.iter().position(|m| *m != PhaseModel::Full) {
        if models[first_relaxed..].contains(&PhaseModel::Full) {
            return Err(PlanError::Structure("full-model phases must precede reduced ones".into()));
        }
    }
    let first_model = models.first().copied().unwrap_or(PhaseModel::ComOnly);

    // --- variable counts per category ---
    let state_dim = |m: PhaseModel| if m.has_angular_momentum() { 9 } else { 6 };
    let mut counts = [0usize; 5];
    counts[FOOT] = 3 * spec.steps.len();
    counts[STATE] = state_dim(first_model);
    for (i, step) in spec.steps.iter().enumerate() {
        let _ = i;
        for kind in PhaseKind::ORDER {
            if !matches!(step.timing, StepTiming::Fixed(_)) {
                counts[TIME] += 1;
            }
            let npts = active_feet(kind, step.swing).len() * if step.model.point_feet() { 1 } else { 4 };
            counts[STATE] += nk * state_dim(step.model);
            counts[CONTROL] += nk * 3 * npts;
            if step.model.has_relaxation() {
                counts[AUX] += nk * 6 * active_feet(kind, step.swing).len();
            }
        }
    }
    let mut b = NlpBuilder::new();
    let names = ["time", "footsteps", "states", "controls", "auxiliary"];
    let mut base = [0usize; 5];
    for cat in 0..5 {
        base[cat] = b.add_vars(names[cat], counts[cat], f64::NEG_INFINITY, f64::INFINITY, 0.0);
    }
    let mut alloc = Alloc { next: base };

    let g = robot.gravity;
    let gmag = g.norm();
    let mg = robot.weight();
    let kin = &robot.kinematics;

    // --- knot 0 and initial condition ---
    let mut knots = Vec::new();
    let new_knot = |alloc: &mut Alloc, model: PhaseModel| {
        let c = alloc.take(STATE, 3);
        let cd = alloc.take(STATE, 3);
        let l = model.has_angular_momentum().then(|| alloc.take(STATE, 3));
        KnotVars { c, cd, l }
    };
    knots.push(new_knot(&mut alloc, first_model));
    {
        let k0 = knots[0];
        let x = spec.x_init.to_array();
        for a in 0..3 {
            b.add_eq("initial", Some(0), (Affine::var(k0.c + a) + -x[a]).into());
            b.add_eq("initial", Some(0), (Affine::var(k0.cd + a) + -x[3 + a]).into());
            if let Some(l) = k0.l {
                b.add_eq("initial", Some(0), (Affine::var(l + a) + -x[6 + a]).into());
            }
        }
    }

    // Foot state as the horizon unfolds.
    let mut foot_pos: [AffVec; 2] = [const3(&spec.feet[0].position), const3(&spec.feet[1].position)];
    let mut foot_surface = [spec.feet[0].surface_index, spec.feet[1].surface_index];
    let mut foot_yaw = [spec.feet[0].yaw, spec.feet[1].yaw];

    let mut phases: Vec<PhaseLayout> = Vec::new();
    let mut footsteps = Vec::new();
    let mut t_prev = Affine::constant(0.0);

    for (i, step) in spec.steps.iter().enumerate() {
        let swing = step.swing;
        let stance = swing.other();
        let surface = terrain.surface(step.surface)?;

        // Footstep variables, surface containment and reachability.
        let p = alloc.take(FOOT, 3);
        footsteps.push(p);
        let pv = var3(p);
        let hp = surface_to_halfplanes(surface);
        b.add_eq("surface", None, Expr::from(dot3(&hp.normal, &pv) + -hp.offset));
        for (row, bound) in hp.rows.iter().zip(hp.bounds) {
            b.add_le("surface", None, Expr::from(dot3(row, &pv) + -bound));
        }
        let stance_surface = terrain.surface(foot_surface[stance.index()])?;
        let rs = stance_surface.foot_rotation(foot_yaw[stance.index()]);
        let rel = sub3(&pv, &foot_pos[stance.index()]);
        for (a, bound) in &kin.reach_for(swing).half_planes {
            b.add_le("reachability", None, Expr::from(dot3(&(rs * a), &rel) + -bound));
        }

        for (j, kind) in PhaseKind::ORDER.into_iter().enumerate() {
            // Timing.
            let (end, time_var) = match step.timing {
                StepTiming::Fixed(d) => (t_prev.clone() + d[j], None),
                StepTiming::Free | StepTiming::Window(_) => {
                    let t = alloc.take(TIME, 1);
                    let tv = Affine::var(t);
                    b.add_le(
                        "timing",
                        None,
                        Expr::from(t_prev.clone() - tv.clone() + spec.min_phase_duration),
                    );
                    if let StepTiming::Window(w) = step.timing {
                        let (lo, hi) = w[j];
                        if hi - lo <= 1e-12 {
                            b.add_eq("timing_window", None, Expr::from(tv.clone() + -lo));
                        } else {
                            b.add_le("timing_window", None, Expr::from(Affine::constant(lo) - tv.clone()));
                            b.add_le("timing_window", None, Expr::from(tv.clone() + -hi));
                        }
                    }
                    (tv, Some(t))
                }
            };
            let tau = (end.clone() - t_prev.clone()).scaled(1.0 / nk as f64).compress();

            // Contacts of this phase.
            if kind == PhaseKind::PostLanding {
                foot_pos[swing.index()] = pv.clone();
                foot_surface[swing.index()] = step.surface;
                foot_yaw[swing.index()] = 0.0;
            }
            let mut contacts = Vec::new();
            for foot in active_feet(kind, swing) {
                let s = terrain.surface(foot_surface[foot.index()])?;
                let rotation = s.foot_rotation(foot_yaw[foot.index()]);
                let offsets = if step.model.point_feet() {
                    vec![Vec3::zeros()]
                } else {
                    robot.foot.corner_offsets().iter().map(|o| rotation * o).collect()
                };
                contacts.push(ContactLayout {
                    foot,
                    surface: foot_surface[foot.index()],
                    center: foot_pos[foot.index()].clone(),
                    rotation,
                    offsets,
                });
            }
            let npts: usize = contacts.iter().map(|c| c.offsets.len()).sum();
            let first_knot = knots.len() - 1;
            let mut forces = Vec::with_capacity(nk);
            let mut psis = Vec::with_capacity(nk);

            for _ in 0..nk {
                let k = knots.len() - 1;
                let kv = knots[k];
                let kn = new_knot(&mut alloc, step.model);
                knots.push(kn);
                let f: Vec<usize> = (0..npts).map(|_| alloc.take(CONTROL, 3)).collect();
                let psi: Vec<usize> = if step.model.has_relaxation() {
                    (0..contacts.len()).map(|_| alloc.take(AUX, 6)).collect()
                } else {
                    Vec::new()
                };
                // Contact point positions and lever arms.
                let mut points = Vec::with_capacity(npts);
                for c in &contacts {
                    for o in &c.offsets {
                        points.push((offset3(&c.center, o), c.surface));
                    }
                }
                let cvar = var3(kv.c);
                // CoM acceleration per axis: |g| sum(beta) - g.
                let acc: Vec<Affine> = (0..3)
                    .map(|a| {
                        let mut e = Affine::constant(-g[a]);
                        for &fi in &f {
                            e.add_term(fi + a, gmag);
                        }
                        e
                    })
                    .collect();
                for a in 0..3 {
                    let e = Expr::from(Affine::var(kn.c + a) - Affine::var(kv.c + a))
                        - Expr::product(&[tau.clone(), Affine::var(kv.cd + a)], 1.0)?;
                    b.add_eq("dynamics", Some(k), e);
                }
                for a in 0..3 {
                    let e = Expr::from(Affine::var(kn.cd + a) - Affine::var(kv.cd + a))
                        - Expr::product(&[tau.clone(), acc[a].clone()], 1.0)?;
                    b.add_eq("dynamics", Some(k), e);
                }
                if let (Some(ln), Some(lk)) = (kn.l, kv.l) {
                    for a in 0..3 {
                        let (u, w) = ((a + 1) % 3, (a + 2) % 3);
                        let mut e = Expr::from(Affine::var(ln + a) - Affine::var(lk + a));
                        for (pt, fi) in points.iter().zip(&f) {
                            let lever = sub3(&pt.0, &cvar);
                            e += Expr::product(&[tau.clone(), lever[u].clone(), Affine::var(fi + w)], -mg)?;
                            e += Expr::product(&[tau.clone(), lever[w].clone(), Affine::var(fi + u)], mg)?;
                        }
                        b.add_eq("dynamics", Some(k), e);
                    }
                }
                // Friction pyramid per contact point.
                for ((_, sidx), &fi) in points.iter().zip(&f) {
                    let s = terrain.surface(*sidx)?;
                    let n = s.unit_normal();
                    let mu = s.friction();
                    let (t1, t2) = s.tangents();
                    let fv = var3(fi);
                    let normal = dot3(&n, &fv) * mu;
                    for t in [t1, t2] {
                        let ft = dot3(&t, &fv);
                        b.add_le("friction", Some(k), Expr::from(ft.clone() - normal.clone()));
                        b.add_le("friction", Some(k), Expr::from(-ft - normal.clone()));
                    }
                }
                // Relaxed moment terms. Per foot, Σ (p_i − c) × f_i equals
                // (center − c) × Σf_i plus a term linear in the forces, so only
                // the first product needs auxiliaries.
                let mut slot = 0;
                for (ct, &ps) in contacts.iter().zip(&psi) {
                    let n = ct.offsets.len();
                    let force = resultant(&f[slot..slot + n]);
                    slot += n;
                    for cell in moment_cells(&sub3(&ct.center, &cvar), &force, ps) {
                        let (_, rows) = relax_bilinear(&cell);
                        for row in rows {
                            b.add_le("relaxation", Some(k), row);
                        }
                    }
                }
                // CoM polytope at the end of the interval, for each active foot.
                let cnext = var3(kn.c);
                for c in &contacts {
                    let rel = sub3(&cnext, &c.center);
                    for (a, bound) in &kin.com.half_planes {
                        b.add_le("com_polytope", Some(k + 1), Expr::from(dot3(&(c.rotation * a), &rel) + -bound));
                    }
                }
                // Running cost.
                let w = &spec.weights;
                for acc_a in &acc {
                    b.add_cost(Expr::product(&[tau.clone(), acc_a.clone(), acc_a.clone()], w.acceleration)?);
                }
                if step.model.has_angular_momentum() {
                    if let Some(lk) = kv.l {
                        for a in 0..3 {
                            b.add_cost(Expr::product(&[tau.clone(), Affine::var(lk + a), Affine::var(lk + a)], w.angular)?);
                        }
                    }
                }
                if !psi.is_empty() {
                    let mut sum = Affine::default();
                    for &ps in &psi {
                        for m in 0..6 {
                            sum.add_term(ps + m, 1.0);
                        }
                    }
                    b.add_cost(Expr::product(&[tau.clone(), sum], w.psi)?);
                }
                forces.push(f);
                psis.push(psi);
            }
            phases.push(PhaseLayout {
                kind,
                step: i,
                model: step.model,
                start: t_prev.clone(),
                end: end.clone(),
                first_knot,
                contacts,
                forces,
                psi: psis,
                time_var,
            });
            t_prev = end;
        }
    }
    if !t_prev.clone().compress().is_constant() {
        b.add_le("timing", None, Expr::from(t_prev.clone() + -spec.t_max));
    }

    // Terminal cost.
    let last = *knots.last().expect("knot 0 exists");
    let target = spec.terminal.state.to_array();
    let wt = spec.terminal.weight;
    for a in 0..3 {
        b.add_cost(Expr::square(&(Affine::var(last.c + a) + -target[a])).scaled(wt));
        b.add_cost(Expr::square(&(Affine::var(last.cd + a) + -target[3 + a])).scaled(wt));
        if let Some(l) = last.l {
            b.add_cost(Expr::square(&(Affine::var(l + a) + -target[6 + a])).scaled(wt));
        }
    }
    if let (Some(p_star), Some(&p)) = (spec.terminal.footstep, footsteps.first()) {
        for a in 0..3 {
            b.add_cost(Expr::square(&(Affine::var(p + a) + -p_star[a])).scaled(spec.terminal.footstep_weight));
        }
    }
    debug_assert_eq!(alloc.next[AUX], base[AUX] + counts[AUX]);

    let nlp = b.finish()?;
    let mut problem = TranscribedProblem {
        nlp,
        layout: Layout {
            knots,
            phases,
            footsteps,
        },
        spec: spec.clone(),
        robot: robot.clone(),
        terrain: terrain.clone(),
    };
    problem.nlp.initial = problem.default_guess();
    Ok(problem)
}

impl TranscribedProblem {
    pub fn num_vars(&self) -> usize {
        self.nlp.n
    }

    pub fn knots_per_phase(&self) -> usize {
        self.spec.knots_per_phase
    }

    /// Cold-start guess: uniform timings, CoM interpolated towards a point above
    /// the last step surface, weight split evenly over the contact points.
    pub fn default_guess(&self) -> Vec<f64> {
        let spec = &self.spec;
        let nk = spec.knots_per_phase;
        let mut x = vec![0.0; self.nlp.n];
        // Phase durations.
        let mut durations = Vec::with_capacity(spec.num_phases());
        let mut free_total = 0.0;
        let mut fixed_total = 0.0;
        for step in &spec.steps {
            for j in 0..3 {
                match step.timing {
                    StepTiming::Fixed(d) => {
                        durations.push(d[j]);
                        fixed_total += d[j];
                    }
                    StepTiming::Free => {
                        durations.push(spec.default_phase_duration);
                        free_total += spec.default_phase_duration;
                    }
                    StepTiming::Window(_) => durations.push(f64::NAN),
                }
            }
        }
        let room = 0.95 * spec.t_max - fixed_total;
        if free_total > 0.0 && free_total > room && room > 0.0 {
            let s = room / free_total;
            for (q, d) in durations.iter_mut().enumerate() {
                if spec.steps[q / 3].timing == StepTiming::Free {
                    *d *= s;
                }
            }
        }
        let mut t = 0.0;
        let mut ends = Vec::with_capacity(durations.len());
        for (q, d) in durations.iter_mut().enumerate() {
            if let StepTiming::Window(w) = spec.steps[q / 3].timing {
                let (lo, hi) = w[q % 3];
                let target = 0.5 * (lo + hi);
                *d = (target - t).max(spec.min_phase_duration.max(1e-3));
            }
            t += *d;
            ends.push(t);
        }
        let total = t.max(1e-6);
        for (ph, &end) in self.layout.phases.iter().zip(&ends) {
            if let Some(v) = ph.time_var {
                x[v] = end;
            }
        }
        // Footsteps.
        for (step, &p) in spec.steps.iter().zip(&self.layout.footsteps) {
            let center = self.terrain.surfaces[step.surface].center();
            x[p..p + 3].copy_from_slice(center.as_slice());
        }
        // CoM path.
        let c0 = spec.x_init.com_position;
        let c_end = match spec.steps.last() {
            Some(step) => {
                let s = &self.terrain.surfaces[step.surface];
                let other = &self.terrain.surfaces[if spec.steps.len() >= 2 {
                    spec.steps[spec.steps.len() - 2].surface
                } else {
                    spec.feet[step.swing.other().index()].surface_index
                }];
                0.5 * (s.center() + other.center()) + Vec3::new(0.0, 0.0, self.robot.nominal_com_height)
            }
            None => c0,
        };
        let vel = (c_end - c0) / total;
        let mut knot_time = vec![0.0; self.layout.knots.len()];
        for (q, ph) in self.layout.phases.iter().enumerate() {
            let start = if q == 0 { 0.0 } else { ends[q - 1] };
            for j in 0..=nk {
                knot_time[ph.first_knot + j] = start + durations[q] * j as f64 / nk as f64;
            }
        }
        for (k, kv) in self.layout.knots.iter().enumerate() {
            let (c, cd) = if k == 0 {
                (c0, spec.x_init.com_velocity)
            } else {
                (c0 + vel * knot_time[k], vel)
            };
            x[kv.c..kv.c + 3].copy_from_slice(c.as_slice());
            x[kv.cd..kv.cd + 3].copy_from_slice(cd.as_slice());
            if let Some(l) = kv.l {
                let lv = if k == 0 { spec.x_init.angular_momentum } else { Vec3::zeros() };
                x[l..l + 3].copy_from_slice(lv.as_slice());
            }
        }
        // Forces.
        for ph in &self.layout.phases {
            let share = 1.0 / ph.num_points() as f64;
            for f in &ph.forces {
                for &fi in f {
                    x[fi + 2] = share;
                }
            }
        }
        self.fill_tight_auxiliaries(&mut x);
        x
    }

    /// Sets every ψ to its lower bound at the current lever arms and forces.
    pub fn fill_tight_auxiliaries(&self, x: &mut [f64]) {
        for ph in &self.layout.phases {
            if !ph.model.has_relaxation() {
                continue;
            }
            for (j, (f, psi)) in ph.forces.iter().zip(&ph.psi).enumerate() {
                let c = Vec3::from_column_slice(&x[self.layout.knots[ph.first_knot + j].c..][..3]);
                let mut slot = 0;
                for (ct, &ps) in ph.contacts.iter().zip(psi) {
                    let n = ct.offsets.len();
                    let lever = const3(&(eval3(&ct.center, x) - c));
                    let force = resultant(&f[slot..slot + n]);
                    slot += n;
                    for cell in moment_cells(&lever, &force, ps) {
                        let (plus, minus) = cell.tight(x);
                        x[cell.psi_plus] = plus;
                        x[cell.psi_minus] = minus;
                    }
                }
            }
        }
    }

    /// Phase end times at `x`.
    pub fn switch_times(&self, x: &[f64]) -> Vec<f64> {
        self.layout.phases.iter().map(|p| p.end.eval(x)).collect()
    }

    /// Decodes a solution vector.
    pub fn extract_plan(&self, x: &[f64]) -> MotionPlan {
        let nk = self.spec.knots_per_phase;
        let mg = self.robot.weight();
        let state_at = |k: usize| {
            let kv = self.layout.knots[k];
            if k == 0 {
                // Knot 0 is pinned to x_init; report it exactly so plans stitch bitwise.
                let x0 = &self.spec.x_init;
                let l = kv.l.map_or(Vec3::zeros(), |_| x0.angular_momentum);
                return CentroidalState::new(x0.com_position, x0.com_velocity, l);
            }
            let c = Vec3::from_column_slice(&x[kv.c..kv.c + 3]);
            let cd = Vec3::from_column_slice(&x[kv.cd..kv.cd + 3]);
            let l = kv.l.map_or(Vec3::zeros(), |l| Vec3::from_column_slice(&x[l..l + 3]));
            CentroidalState::new(c, cd, l)
        };
        let phases = self
            .layout
            .phases
            .iter()
            .map(|ph| {
                let start_time = ph.start.eval(x);
                let end_time = ph.end.eval(x);
                let contacts = ph
                    .contacts
                    .iter()
                    .map(|c| {
                        let center = eval3(&c.center, x);
                        PlanContact {
                            foot: c.foot,
                            surface: c.surface,
                            center,
                            points: c.offsets.iter().map(|o| center + o).collect(),
                        }
                    })
                    .collect();
                PhasePlan {
                    kind: ph.kind,
                    step: ph.step,
                    model: ph.model,
                    start_time,
                    end_time,
                    tau: (end_time - start_time) / nk as f64,
                    contacts,
                    states: (0..=nk).map(|j| state_at(ph.first_knot + j)).collect(),
                    controls: ph
                        .forces
                        .iter()
                        .map(|f| ControlKnot::new(f.iter().map(|&fi| Vec3::from_column_slice(&x[fi..fi + 3]) * mg).collect()))
                        .collect(),
                }
            })
            .collect();
        MotionPlan {
            phases,
            footsteps: self
                .spec
                .steps
                .iter()
                .zip(&self.layout.footsteps)
                .map(|(s, &p)| Footstep::new(Vec3::from_column_slice(&x[p..p + 3]), s.surface))
                .collect(),
            swing_feet: self.spec.steps.iter().map(|s| s.swing).collect(),
            initial_feet: self.spec.feet,
            initial_state: self.spec.x_init,
            knots_per_phase: nk,
            t_max: self.spec.t_max,
            min_phase_duration: self.spec.min_phase_duration,
        }
    }

    /// Decision vector initialized from `plan` with its first `step_offset`
    /// steps dropped; whatever the plan does not cover keeps the default guess.
    /// Auxiliary ψ are set tight.
    pub fn guess_from_plan(&self, plan: &MotionPlan, step_offset: usize) -> Vec<f64> {
        let mut x = self.default_guess();
        let nk = self.spec.knots_per_phase;
        let mg = self.robot.weight();
        let shift = if step_offset == 0 {
            0.0
        } else {
            plan.phases.get(3 * step_offset - 1).map_or(0.0, |p| p.end_time)
        };
        for (i, &p) in self.layout.footsteps.iter().enumerate() {
            if let Some(fs) = plan.footsteps.get(i + step_offset) {
                x[p..p + 3].copy_from_slice(fs.position.as_slice());
            }
        }
        for (q, ph) in self.layout.phases.iter().enumerate() {
            let Some(src) = plan.phases.get(q + 3 * step_offset) else {
                break;
            };
            if src.states.len() != nk + 1 {
                break;
            }
            if let Some(v) = ph.time_var {
                x[v] = src.end_time - shift;
            }
            for (j, s) in src.states.iter().enumerate() {
                let kv = self.layout.knots[ph.first_knot + j];
                if q == 0 && j == 0 {
                    continue;
                }
                x[kv.c..kv.c + 3].copy_from_slice(s.com_position.as_slice());
                x[kv.cd..kv.cd + 3].copy_from_slice(s.com_velocity.as_slice());
                if let Some(l) = kv.l {
                    x[l..l + 3].copy_from_slice(s.angular_momentum.as_slice());
                }
            }
            for (j, f) in ph.forces.iter().enumerate() {
                let mut slot = 0;
                for ct in &ph.contacts {
                    let n = ct.offsets.len();
                    let mut src_slot = 0;
                    let mut found = None;
                    for sc in &src.contacts {
                        if sc.foot == ct.foot {
                            found = Some((src_slot, sc.points.len()));
                        }
                        src_slot += sc.points.len();
                    }
                    if let Some((s0, sn)) = found {
                        let src_f = &src.controls[j].forces[s0..s0 + sn];
                        let total: Vec3 = src_f.iter().sum();
                        for m in 0..n {
                            let beta = if sn == n { src_f[m] / mg } else { total / (mg * n as f64) };
                            x[f[slot + m]..f[slot + m] + 3].copy_from_slice(beta.as_slice());
                        }
                    }
                    slot += n;
                }
            }
        }
        self.fill_tight_auxiliaries(&mut x);
        x
    }
}
