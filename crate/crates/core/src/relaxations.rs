//! Convex relaxed models for the prediction horizon.
//!
//! A bilinear product `αβ` is written as `¼(ψ⁺ − ψ⁻)` with the convex
//! constraints `ψ⁺ ≥ (α+β)²`, `ψ⁻ ≥ (α−β)²`. Each moment component of
//! `(p − c) × f` is a difference of two bilinears `α₁β₁ − α₂β₂`; one cell holds
//! the whole difference. For a foot, `Σ (p_i − c) × f_i` is the product of the
//! foot-center lever arm and the resultant force plus a term linear in the
//! forces, so each foot in contact needs six ψ per interval.

use serde::{Deserialize, Serialize};

use crate::error::{PlanError, Result};
use crate::expr::{Affine, Expr};
use crate::model::{CentroidalState, Foot, Footstep, RobotModel, Terrain};
use crate::transcription::{
    build, CostWeights, PhaseModel, ProblemSpec, StepSpec, StepTiming, TerminalCost, TranscribedProblem,
    DEFAULT_PHASE_DURATION, MIN_PHASE_DURATION,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RelaxationKind {
    ComOnly,
    PontonRectangular,
    PontonPoint,
}

impl RelaxationKind {
    pub const ALL: [RelaxationKind; 3] = [Self::ComOnly, Self::PontonRectangular, Self::PontonPoint];

    pub fn phase_model(self) -> PhaseModel {
        match self {
            Self::ComOnly => PhaseModel::ComOnly,
            Self::PontonRectangular => PhaseModel::PontonRect,
            Self::PontonPoint => PhaseModel::PontonPoint,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::ComOnly => "ComOnly",
            Self::PontonRectangular => "PontonRectangular",
            Self::PontonPoint => "PontonPoint",
        }
    }
}

impl std::str::FromStr for RelaxationKind {
    type Err = PlanError;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| PlanError::Structure(format!("unknown relaxation kind '{s}'")))
    }
}

/// Relaxes `αβ − α'β'` (the second product is optional).
#[derive(Debug, Clone, PartialEq)]
pub struct BilinearCell {
    pub alpha: Affine,
    pub beta: Affine,
    pub minus: Option<(Affine, Affine)>,
    pub psi_plus: usize,
    pub psi_minus: usize,
}

impl BilinearCell {
    pub fn new(alpha: Affine, beta: Affine, psi_plus: usize, psi_minus: usize) -> Self {
        Self {
            alpha,
            beta,
            minus: None,
            psi_plus,
            psi_minus,
        }
    }

    /// Lower bounds of `(ψ⁺, ψ⁻)` at `x`.
    pub fn tight(&self, x: &[f64]) -> (f64, f64) {
        tight_psi(
            self.alpha.eval(x),
            self.beta.eval(x),
            self.minus.as_ref().map_or((0.0, 0.0), |(a, b)| (a.eval(x), b.eval(x))),
        )
    }
}

/// `(ψ⁺, ψ⁻)` at their lower bounds for `αβ − α'β'`.
pub fn tight_psi(alpha: f64, beta: f64, minus: (f64, f64)) -> (f64, f64) {
    let (a2, b2) = minus;
    (
        (alpha + beta).powi(2) + (a2 - b2).powi(2),
        (alpha - beta).powi(2) + (a2 + b2).powi(2),
    )
}

/// Product expression `¼(ψ⁺ − ψ⁻)` and the two convex rows (`≤ 0` form).
pub fn relax_bilinear(cell: &BilinearCell) -> (Affine, [Expr; 2]) {
    let product = Affine::var(cell.psi_plus).scaled(0.25) - Affine::var(cell.psi_minus).scaled(0.25);
    let (a, b) = (&cell.alpha, &cell.beta);
    let mut plus = Expr::square(&(a.clone() + b.clone())) - Expr::from(Affine::var(cell.psi_plus));
    let mut minus = Expr::square(&(a.clone() - b.clone())) - Expr::from(Affine::var(cell.psi_minus));
    if let Some((a2, b2)) = &cell.minus {
        plus += Expr::square(&(a2.clone() - b2.clone()));
        minus += Expr::square(&(a2.clone() + b2.clone()));
    }
    (product, [plus, minus])
}

/// Relaxed step with fixed phase durations.
pub fn relaxed_step(kind: RelaxationKind, swing: Foot, surface: usize, durations: [f64; 3]) -> StepSpec {
    StepSpec {
        swing,
        surface,
        model: kind.phase_model(),
        timing: StepTiming::Fixed(durations),
    }
}

/// Stand-alone prediction horizon starting from a fixed boundary state.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionTail {
    pub swing_first: Foot,
    /// Step surfaces, in order.
    pub surfaces: Vec<usize>,
    /// Phase durations of each step [s].
    pub durations: Vec<[f64; 3]>,
    /// State at the boundary knot (the execution-horizon terminal knot).
    pub boundary: CentroidalState,
    pub feet: [Footstep; 2],
    pub goal: CentroidalState,
    pub knots_per_phase: usize,
}

pub fn build_prediction_horizon(
    kind: RelaxationKind,
    tail: &PredictionTail,
    terrain: &Terrain,
    robot: &RobotModel,
) -> Result<TranscribedProblem> {
    if tail.durations.len() != tail.surfaces.len() {
        return Err(PlanError::Dimension {
            what: "prediction timings",
            expected: tail.surfaces.len(),
            got: tail.durations.len(),
        });
    }
    let mut swing = tail.swing_first;
    let mut steps = Vec::with_capacity(tail.surfaces.len());
    for (&s, &d) in tail.surfaces.iter().zip(&tail.durations) {
        steps.push(relaxed_step(kind, swing, s, d));
        swing = swing.other();
    }
    let total: f64 = tail.durations.iter().flatten().sum();
    let spec = ProblemSpec {
        knots_per_phase: tail.knots_per_phase,
        t_max: total.max(1e-6),
        min_phase_duration: MIN_PHASE_DURATION,
        default_phase_duration: DEFAULT_PHASE_DURATION,
        x_init: tail.boundary,
        feet: tail.feet,
        steps,
        terminal: TerminalCost::to_state(tail.goal),
        weights: CostWeights::default(),
    };
    build(&spec, terrain, robot)
}

/// Per-knot size of a model.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComplexityReport {
    pub model: String,
    pub decision_variables: usize,
    pub nonconvex_constraints: usize,
    /// Affine plus convex-quadratic rows.
    pub convex_constraints: usize,
}

/// Counts for one double-support interval of a one-step horizon: the new
/// knot's state, the forces and auxiliaries, and the dynamics and relaxation
/// rows of that interval (timings fixed for relaxed models, free for the
/// baseline).
pub fn model_complexity(kind: Option<RelaxationKind>, robot: &RobotModel) -> Result<ComplexityReport> {
    use crate::model::{ContactSurface, Vec3};
    let patch = |x: f64, y: f64| ContactSurface::horizontal(Vec3::new(x, y, 0.0), 0.4, 0.4);
    let terrain = Terrain::new(vec![patch(0.0, 0.225)?, patch(0.0, -0.225)?, patch(0.45, 0.225)?], (0, 1), vec![2])?;
    let feet = crate::transcription::default_start_feet(&terrain)?;
    let mid = 0.5 * (feet[0].position + feet[1].position);
    let rest = CentroidalState::at_rest(mid + Vec3::new(0.0, 0.0, robot.nominal_com_height));
    let (problem, name) = match kind {
        None => (
            crate::transcription::build_baseline(
                &crate::transcription::HorizonSpec::new(1, 2, Foot::Left)?,
                &terrain,
                &rest,
                &rest,
                robot,
            )?,
            "Baseline",
        ),
        Some(k) => {
            let tail = PredictionTail {
                swing_first: Foot::Left,
                surfaces: vec![2],
                durations: vec![[DEFAULT_PHASE_DURATION; 3]],
                boundary: rest,
                feet,
                goal: rest,
                knots_per_phase: 2,
            };
            (build_prediction_horizon(k, &tail, &terrain, robot)?, k.name())
        }
    };
    let ph = &problem.layout.phases[0];
    let knot = problem.layout.knots[1];
    let state = 6 + if knot.l.is_some() { 3 } else { 0 };
    let decision_variables = state + 3 * ph.forces[0].len() + 6 * ph.psi[0].len();
    let (mut nonconvex, mut convex) = (0, 0);
    let nlp = &problem.nlp;
    for info in nlp.eq_info.iter().chain(&nlp.ineq_info) {
        if info.knot == Some(0) && matches!(info.family, "dynamics" | "relaxation") {
            match info.convexity {
                crate::expr::Convexity::NonConvex => nonconvex += 1,
                _ => convex += 1,
            }
        }
    }
    Ok(ComplexityReport {
        model: name.to_string(),
        decision_variables,
        nonconvex_constraints: nonconvex,
        convex_constraints: convex,
    })
}

/// Complexity table for the baseline and every relaxation, as CSV.
pub fn complexity_csv(robot: &RobotModel) -> Result<String> {
    let mut out = String::from("model,decision_variables,nonconvex_constraints,convex_constraints\n");
    for kind in [None].into_iter().chain(RelaxationKind::ALL.map(Some)) {
        let r = model_complexity(kind, robot)?;
        out.push_str(&format!(
            "{},{},{},{}\n",
            r.model, r.decision_variables, r.nonconvex_constraints, r.convex_constraints
        ));
    }
    Ok(out)
}

/// Maximum constraint violation of the relaxed counterpart of `baseline`
/// (steps after the first switched to `kind`, durations pinned to the
/// solution's) at the tight-ψ projection of the baseline solution `x`.
/// Point feet receive the resultant of each foot's forces.
pub fn projection_violation(baseline: &TranscribedProblem, x: &[f64], kind: RelaxationKind) -> Result<f64> {
    let plan = baseline.extract_plan(x);
    let mut spec = baseline.spec.clone();
    for (i, step) in spec.steps.iter_mut().enumerate().skip(1) {
        let d: [f64; 3] = std::array::from_fn(|j| {
            let ph = &plan.phases[3 * i + j];
            ph.end_time - ph.start_time
        });
        *step = relaxed_step(kind, step.swing, step.surface, d);
    }
    let relaxed = build(&spec, &baseline.terrain, &baseline.robot)?;
    let y = relaxed.guess_from_plan(&plan, 0);
    Ok(relaxed.nlp.max_violation(&y))
}
