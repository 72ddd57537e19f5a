use serde::{Deserialize, Serialize};

use super::{PhaseKind, PhaseModel};
use crate::error::{PlanError, Result};
use crate::model::{surface_to_halfplanes, CentroidalState, ControlKnot, Foot, Footstep, RobotModel, Terrain, Vec3};

/// A foot in contact during a phase, with its contact point positions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanContact {
    pub foot: Foot,
    pub surface: usize,
    pub center: Vec3,
    pub points: Vec<Vec3>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhasePlan {
    pub kind: PhaseKind,
    pub step: usize,
    pub model: PhaseModel,
    pub start_time: f64,
    pub end_time: f64,
    pub tau: f64,
    pub contacts: Vec<PlanContact>,
    /// `N_k + 1` knots; the first is shared with the previous phase.
    pub states: Vec<CentroidalState>,
    /// Forces [N] per interval, contacts flattened in order.
    pub controls: Vec<ControlKnot>,
}

impl PhasePlan {
    pub fn contact_points(&self) -> Vec<Vec3> {
        self.contacts.iter().flat_map(|c| c.points.iter().copied()).collect()
    }

    /// Surface of every contact point, aligned with [`PhasePlan::contact_points`].
    pub fn point_surfaces(&self) -> Vec<usize> {
        self.contacts.iter().flat_map(|c| std::iter::repeat_n(c.surface, c.points.len())).collect()
    }
}

/// Decoded solution of a transcribed horizon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MotionPlan {
    pub phases: Vec<PhasePlan>,
    /// New placement of the swing foot of every step.
    pub footsteps: Vec<Footstep>,
    pub swing_feet: Vec<Foot>,
    pub initial_feet: [Footstep; 2],
    pub initial_state: CentroidalState,
    pub knots_per_phase: usize,
    pub t_max: f64,
    pub min_phase_duration: f64,
}

impl MotionPlan {
    pub fn num_steps(&self) -> usize {
        self.footsteps.len()
    }

    pub fn switch_times(&self) -> Vec<f64> {
        self.phases.iter().map(|p| p.end_time).collect()
    }

    /// Duration of the first step (its three phases).
    pub fn first_step_duration(&self) -> f64 {
        self.phases.get(2).map_or(0.0, |p| p.end_time)
    }

    /// State at the end of step `step`.
    pub fn step_terminal_state(&self, step: usize) -> Option<CentroidalState> {
        self.phases.get(3 * step + 2).and_then(|p| p.states.last().copied())
    }

    pub fn terminal_state(&self) -> Option<CentroidalState> {
        self.phases.last().and_then(|p| p.states.last().copied())
    }

    /// Foot placements after `steps` steps.
    pub fn feet_after(&self, steps: usize) -> [Footstep; 2] {
        let mut feet = self.initial_feet;
        for (fs, foot) in self.footsteps.iter().zip(&self.swing_feet).take(steps) {
            feet[foot.index()] = *fs;
        }
        feet
    }

    /// Keeps only the first `steps` steps.
    pub fn truncated(&self, steps: usize) -> MotionPlan {
        let mut out = self.clone();
        out.phases.truncate(3 * steps);
        out.footsteps.truncate(steps);
        out.swing_feet.truncate(steps);
        out
    }
}

/// One forward-Euler step of the centroidal dynamics:
/// `c⁺ = c + τċ`, `ċ⁺ = ċ + τ(Σf/m − g)`, `L⁺ = L + τ Σ (p − c) × f`.
pub fn dynamics_step(
    x: &CentroidalState,
    u: &ControlKnot,
    contact_points: &[Vec3],
    tau: f64,
    mass: f64,
    gravity: &Vec3,
) -> Result<CentroidalState> {
    if u.forces.len() != contact_points.len() {
        return Err(PlanError::Dimension {
            what: "contact points",
            expected: u.forces.len(),
            got: contact_points.len(),
        });
    }
    if !(tau > 0.0) || !(mass > 0.0) {
        return Err(PlanError::Range("time step and mass must be positive".into()));
    }
    let total = u.total();
    let mut moment = Vec3::zeros();
    for (p, f) in contact_points.iter().zip(&u.forces) {
        moment += (p - x.com_position).cross(f);
    }
    Ok(CentroidalState::new(
        x.com_position + tau * x.com_velocity,
        x.com_velocity + tau * (total / mass - gravity),
        x.angular_momentum + tau * moment,
    ))
}

/// Worst constraint violation of a plan per constraint family.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ResidualReport {
    pub dynamics: f64,
    /// In units of body weight, as transcribed.
    pub friction: f64,
    /// CoM and footstep reachability polytopes [m].
    pub polytope: f64,
    pub surface: f64,
    pub timing: f64,
}

impl ResidualReport {
    pub fn max(&self) -> f64 {
        self.dynamics.max(self.friction).max(self.polytope).max(self.surface).max(self.timing)
    }
}

/// Evaluates the transcribed constraint families on a decoded plan.
pub fn evaluate_residuals(plan: &MotionPlan, terrain: &Terrain, robot: &RobotModel) -> ResidualReport {
    let mut r = ResidualReport::default();
    let weight = robot.weight();
    let mut t_prev = 0.0;
    let mut prev_state: Option<CentroidalState> = None;
    for ph in &plan.phases {
        let points = ph.contact_points();
        let surfaces = ph.point_surfaces();
        // Shared boundary knots.
        if let (Some(prev), Some(first)) = (prev_state, ph.states.first()) {
            let d = (prev.com_position - first.com_position)
                .amax()
                .max((prev.com_velocity - first.com_velocity).amax());
            r.dynamics = r.dynamics.max(d);
        }
        for (k, u) in ph.controls.iter().enumerate() {
            let x = &ph.states[k];
            let next = &ph.states[k + 1];
            match dynamics_step(x, u, &points, ph.tau, robot.mass, &robot.gravity) {
                Ok(pred) => {
                    let mut d = (pred.com_position - next.com_position)
                        .amax()
                        .max((pred.com_velocity - next.com_velocity).amax());
                    if ph.model.has_angular_momentum() {
                        d = d.max((pred.angular_momentum - next.angular_momentum).amax());
                    }
                    r.dynamics = r.dynamics.max(d);
                }
                Err(_) => r.dynamics = f64::INFINITY,
            }
            for (f, &s) in u.forces.iter().zip(&surfaces) {
                let Ok(surf) = terrain.surface(s) else {
                    r.friction = f64::INFINITY;
                    continue;
                };
                let beta = f / weight;
                let fn_ = surf.unit_normal().dot(&beta) * surf.friction();
                let (t1, t2) = surf.tangents();
                for t in [t1, t2] {
                    let ft = t.dot(&beta);
                    r.friction = r.friction.max(ft.abs() - fn_);
                }
            }
        }
        for state in &ph.states[1..] {
            for c in &ph.contacts {
                let Ok(surf) = terrain.surface(c.surface) else { continue };
                let yaw = foot_yaw(plan, c);
                let rot = surf.foot_rotation(yaw);
                let local = rot.transpose() * (state.com_position - c.center);
                r.polytope = r.polytope.max(robot.kinematics.com.max_violation(&local));
            }
        }
        let d = ph.end_time - ph.start_time;
        r.timing = r.timing.max((ph.start_time - t_prev).abs()).max(plan.min_phase_duration - d - 1e-12);
        t_prev = ph.end_time;
        prev_state = ph.states.last().copied();
    }
    r.timing = r.timing.max(t_prev - plan.t_max);
    // Footsteps: surface containment and reachability from the stance foot.
    let mut feet = plan.initial_feet;
    for (fs, &swing) in plan.footsteps.iter().zip(&plan.swing_feet) {
        if let Ok(surf) = terrain.surface(fs.surface_index) {
            let hp = surface_to_halfplanes(surf);
            r.surface = r.surface.max(hp.plane_residual(&fs.position).abs()).max(hp.max_boundary_violation(&fs.position));
        } else {
            r.surface = f64::INFINITY;
        }
        let stance = feet[swing.other().index()];
        if let Ok(ss) = terrain.surface(stance.surface_index) {
            let rot = ss.foot_rotation(stance.yaw);
            let local = rot.transpose() * (fs.position - stance.position);
            r.polytope = r.polytope.max(robot.kinematics.reach_for(swing).max_violation(&local));
        }
        feet[swing.index()] = *fs;
    }
    r.dynamics = r.dynamics.max(0.0);
    r.friction = r.friction.max(0.0);
    r.polytope = r.polytope.max(0.0);
    r.timing = r.timing.max(0.0);
    r
}

/// Heading of the foot in `contact`: initial feet keep theirs, new steps use 0.
fn foot_yaw(plan: &MotionPlan, contact: &PlanContact) -> f64 {
    let init = plan.initial_feet[contact.foot.index()];
    if (init.position - contact.center).amax() == 0.0 && init.surface_index == contact.surface {
        init.yaw
    } else {
        0.0
    }
}
