//! Multi-phase direct transcription of the centroidal planning problem.
//!
//! A horizon is a sequence of steps; each step has three phases (pre-swing,
//! swing, post-landing) of `N_k` forward-Euler intervals. Knots at phase
//! boundaries are shared. Contact forces are decision variables expressed in
//! units of body weight, one 3-vector per contact point per interval.

mod build;
mod plan;
mod spline;

use serde::{Deserialize, Serialize};

pub use build::{
    build, build_baseline, default_start_feet, ContactLayout, KnotVars, Layout, PhaseLayout, TranscribedProblem,
    NOMINAL_HALF_STANCE,
};
pub use plan::{dynamics_step, evaluate_residuals, MotionPlan, PhasePlan, PlanContact, ResidualReport};
pub use spline::{swing_spline, SplineSample};

use crate::error::{PlanError, Result};
use crate::model::{CentroidalState, Foot, Footstep, Vec3};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PhaseKind {
    PreSwing,
    Swing,
    PostLanding,
}

impl PhaseKind {
    pub const ORDER: [PhaseKind; 3] = [PhaseKind::PreSwing, PhaseKind::Swing, PhaseKind::PostLanding];
}

/// Dynamics model used inside a phase.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PhaseModel {
    /// Full centroidal dynamics with rectangular feet.
    Full,
    /// CoM position/velocity only, rectangular feet, no angular terms.
    ComOnly,
    /// CoM dynamics plus relaxed moment terms, rectangular feet.
    PontonRect,
    /// CoM dynamics plus relaxed moment terms, one force per foot.
    PontonPoint,
}

impl PhaseModel {
    pub fn has_angular_momentum(self) -> bool {
        self == PhaseModel::Full
    }

    pub fn has_relaxation(self) -> bool {
        matches!(self, PhaseModel::PontonRect | PhaseModel::PontonPoint)
    }

    pub fn point_feet(self) -> bool {
        self == PhaseModel::PontonPoint
    }
}

/// One phase of a horizon: which feet are in contact, and how many knots.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseSpec {
    pub kind: PhaseKind,
    pub active_contacts: Vec<Foot>,
    pub knot_count: usize,
}

/// Step/phase structure of a full-model horizon.
#[derive(Debug, Clone, PartialEq)]
pub struct HorizonSpec {
    pub steps: usize,
    pub phases: Vec<PhaseSpec>,
    pub knots_per_phase: usize,
    pub t_max: f64,
    pub swing_first: Foot,
}

impl HorizonSpec {
    /// `steps` alternating steps starting with `swing_first`; `T_max = 1.2 s` per step.
    pub fn new(steps: usize, knots_per_phase: usize, swing_first: Foot) -> Result<Self> {
        if steps == 0 || knots_per_phase == 0 {
            return Err(PlanError::Range("horizon needs at least one step and one knot per phase".into()));
        }
        let mut phases = Vec::with_capacity(3 * steps);
        let mut swing = swing_first;
        for _ in 0..steps {
            for kind in PhaseKind::ORDER {
                let active_contacts = match kind {
                    PhaseKind::Swing => vec![swing.other()],
                    _ => vec![Foot::Left, Foot::Right],
                };
                phases.push(PhaseSpec {
                    kind,
                    active_contacts,
                    knot_count: knots_per_phase,
                });
            }
            swing = swing.other();
        }
        Ok(Self {
            steps,
            phases,
            knots_per_phase,
            t_max: 1.2 * steps as f64,
            swing_first,
        })
    }

    pub fn swing_foot(&self, step: usize) -> Foot {
        if step % 2 == 0 {
            self.swing_first
        } else {
            self.swing_first.other()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.phases.len() != 3 * self.steps {
            return Err(PlanError::Structure("phase count must be three per step".into()));
        }
        for (q, ph) in self.phases.iter().enumerate() {
            let step = q / 3;
            if ph.kind != PhaseKind::ORDER[q % 3] {
                return Err(PlanError::Structure(format!("phase {q} is out of order")));
            }
            let expected = match ph.kind {
                PhaseKind::Swing => vec![self.swing_foot(step).other()],
                _ => vec![Foot::Left, Foot::Right],
            };
            if ph.active_contacts != expected {
                return Err(PlanError::Structure(format!("phase {q} has the wrong contact set")));
            }
            if ph.knot_count != self.knots_per_phase {
                return Err(PlanError::Structure(format!("phase {q} has a different knot count")));
            }
        }
        if !(self.t_max > 0.0) {
            return Err(PlanError::Range("t_max must be positive".into()));
        }
        Ok(())
    }
}

/// How the three phase end times of a step are decided.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepTiming {
    /// End times are decision variables.
    Free,
    /// Phase durations are constants [s].
    Fixed([f64; 3]),
    /// End times are decision variables restricted to `[lo, hi]` (absolute, from horizon start).
    Window([(f64, f64); 3]),
}

/// One step of a horizon.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepSpec {
    pub swing: Foot,
    pub surface: usize,
    pub model: PhaseModel,
    pub timing: StepTiming,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostWeights {
    /// Weight of `τ c̈ᵀc̈`.
    pub acceleration: f64,
    /// Weight of `τ LᵀL`.
    pub angular: f64,
    /// Weight of `τ Σψ` in relaxed phases.
    pub psi: f64,
}

impl Default for CostWeights {
    fn default() -> Self {
        Self {
            acceleration: 1.0,
            angular: 1.0,
            psi: 1e-2,
        }
    }
}

/// Quadratic terminal cost on the last knot (and optionally the first footstep).
#[derive(Debug, Clone, PartialEq)]
pub struct TerminalCost {
    pub state: CentroidalState,
    pub weight: f64,
    pub footstep: Option<Vec3>,
    pub footstep_weight: f64,
}

impl TerminalCost {
    pub fn to_state(state: CentroidalState) -> Self {
        Self {
            state,
            weight: 1.0,
            footstep: None,
            footstep_weight: 1.0,
        }
    }
}

/// Everything needed to transcribe one horizon.
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemSpec {
    pub knots_per_phase: usize,
    pub t_max: f64,
    pub min_phase_duration: f64,
    /// Duration used for cold-start guesses of free phases [s].
    pub default_phase_duration: f64,
    pub x_init: CentroidalState,
    /// Current placement of each foot, indexed by [`Foot::index`].
    pub feet: [Footstep; 2],
    pub steps: Vec<StepSpec>,
    pub terminal: TerminalCost,
    pub weights: CostWeights,
}

pub const DEFAULT_KNOTS_PER_PHASE: usize = 8;
pub const MIN_PHASE_DURATION: f64 = 0.05;
pub const DEFAULT_PHASE_DURATION: f64 = 0.3;

impl ProblemSpec {
    pub fn num_phases(&self) -> usize {
        3 * self.steps.len()
    }
}
