//! Plot-ready CSV export of executed trajectories.

use std::path::Path;

use rhp_core::model::{Foot, RobotModel, Vec3};
use rhp_core::rhp::EpisodeRecord;
use rhp_core::transcription::{swing_spline, MotionPlan, PhaseKind, PhaseModel};
use rhp_core::{PlanError, Result};
use serde::{Deserialize, Serialize};

use crate::suite::csv_error;

/// Apex height of exported swing-foot splines above the higher foothold [m].
pub const SWING_CLEARANCE: f64 = 0.05;

/// One knot of the stitched trajectory. Forces act over `[t, t + tau)`;
/// the final row has `tau = 0` and no forces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRow {
    pub cycle: usize,
    pub phase: usize,
    pub kind: PhaseKind,
    pub model: PhaseModel,
    /// 1 on the first knot of a phase.
    pub phase_start: u8,
    pub t: f64,
    pub tau: f64,
    pub com_x: f64,
    pub com_y: f64,
    pub com_z: f64,
    pub vel_x: f64,
    pub vel_y: f64,
    pub vel_z: f64,
    pub l_x: f64,
    pub l_y: f64,
    pub l_z: f64,
    pub left_contact: u8,
    /// Foot center; on the swing spline while the foot is in the air.
    pub left_x: f64,
    pub left_y: f64,
    pub left_z: f64,
    /// Resultant contact force [N].
    pub left_fx: f64,
    pub left_fy: f64,
    pub left_fz: f64,
    /// Moment of the contact forces about the foot center [N m].
    pub left_mx: f64,
    pub left_my: f64,
    pub left_mz: f64,
    pub right_contact: u8,
    pub right_x: f64,
    pub right_y: f64,
    pub right_z: f64,
    pub right_fx: f64,
    pub right_fy: f64,
    pub right_fz: f64,
    pub right_mx: f64,
    pub right_my: f64,
    pub right_mz: f64,
}

#[derive(Debug, Clone, Copy, Default)]
struct FootKnot {
    contact: bool,
    position: Vec3,
    force: Vec3,
    moment: Vec3,
}

impl TrajectoryRow {
    pub fn com(&self) -> Vec3 {
        Vec3::new(self.com_x, self.com_y, self.com_z)
    }

    pub fn velocity(&self) -> Vec3 {
        Vec3::new(self.vel_x, self.vel_y, self.vel_z)
    }

    pub fn angular_momentum(&self) -> Vec3 {
        Vec3::new(self.l_x, self.l_y, self.l_z)
    }

    /// `(position, force, moment)` of a foot's contact, if in contact.
    pub fn foot(&self, foot: Foot) -> Option<(Vec3, Vec3, Vec3)> {
        let r = match foot {
            Foot::Left => (
                self.left_contact,
                [self.left_x, self.left_y, self.left_z],
                [self.left_fx, self.left_fy, self.left_fz],
                [self.left_mx, self.left_my, self.left_mz],
            ),
            Foot::Right => (
                self.right_contact,
                [self.right_x, self.right_y, self.right_z],
                [self.right_fx, self.right_fy, self.right_fz],
                [self.right_mx, self.right_my, self.right_mz],
            ),
        };
        (r.0 == 1).then(|| (Vec3::from(r.1), Vec3::from(r.2), Vec3::from(r.3)))
    }
}

/// Rows of the first `steps` steps of `plan`, shifted by `t_offset`. The
/// closing knot is included only with `close`.
pub fn plan_rows(plan: &MotionPlan, steps: usize, cycle: usize, t_offset: f64, first_phase: usize, close: bool) -> Result<Vec<TrajectoryRow>> {
    let mut rows = Vec::new();
    let phases = &plan.phases[..(3 * steps).min(plan.phases.len())];
    let mut feet = plan.initial_feet;
    for (q, ph) in phases.iter().enumerate() {
        let step = q / 3;
        let swing = plan.swing_feet[step];
        let spline = match ph.kind {
            PhaseKind::Swing => Some(swing_spline(
                &feet[swing.index()].position,
                &plan.footsteps[step].position,
                SWING_CLEARANCE,
                ph.end_time - ph.start_time,
                ph.states.len() - 1,
            )?),
            _ => None,
        };
        let last = close && q + 1 == phases.len();
        let knots = if last { ph.states.len() } else { ph.states.len() - 1 };
        for j in 0..knots {
            let x = &ph.states[j];
            let mut foot_data = [FootKnot::default(); 2];
            for f in [Foot::Left, Foot::Right] {
                foot_data[f.index()].position = feet[f.index()].position;
            }
            if let Some(s) = &spline {
                foot_data[swing.index()].position = s[j].position;
            }
            let mut offset = 0;
            for c in &ph.contacts {
                let fd = &mut foot_data[c.foot.index()];
                fd.contact = true;
                fd.position = c.center;
                if let Some(u) = ph.controls.get(j) {
                    for (p, f) in c.points.iter().zip(&u.forces[offset..offset + c.points.len()]) {
                        fd.force += f;
                        fd.moment += (p - c.center).cross(f);
                    }
                }
                offset += c.points.len();
            }
            let tau = if j < ph.controls.len() { ph.tau } else { 0.0 };
            let [l, r] = foot_data;
            rows.push(TrajectoryRow {
                cycle,
                phase: first_phase + q,
                kind: ph.kind,
                model: ph.model,
                phase_start: u8::from(j == 0),
                t: t_offset + ph.start_time + j as f64 * ph.tau,
                tau,
                com_x: x.com_position.x,
                com_y: x.com_position.y,
                com_z: x.com_position.z,
                vel_x: x.com_velocity.x,
                vel_y: x.com_velocity.y,
                vel_z: x.com_velocity.z,
                l_x: x.angular_momentum.x,
                l_y: x.angular_momentum.y,
                l_z: x.angular_momentum.z,
                left_contact: u8::from(l.contact),
                left_x: l.position.x,
                left_y: l.position.y,
                left_z: l.position.z,
                left_fx: l.force.x,
                left_fy: l.force.y,
                left_fz: l.force.z,
                left_mx: l.moment.x,
                left_my: l.moment.y,
                left_mz: l.moment.z,
                right_contact: u8::from(r.contact),
                right_x: r.position.x,
                right_y: r.position.y,
                right_z: r.position.z,
                right_fx: r.force.x,
                right_fy: r.force.y,
                right_fz: r.force.z,
                right_mx: r.moment.x,
                right_my: r.moment.y,
                right_mz: r.moment.z,
            });
        }
        if ph.kind == PhaseKind::PostLanding {
            feet[swing.index()] = plan.footsteps[step];
        }
    }
    Ok(rows)
}

/// Executed trajectory of an episode: the first step of every converged cycle.
pub fn trajectory_rows(episode: &EpisodeRecord) -> Result<Vec<TrajectoryRow>> {
    let executed: Vec<_> = episode.cycles.iter().filter(|c| c.converged() && c.plan.is_some()).collect();
    if executed.is_empty() {
        return Err(PlanError::Structure("episode has no converged cycle to export".into()));
    }
    let mut rows = Vec::new();
    let mut t = 0.0;
    for (i, c) in executed.iter().enumerate() {
        let plan = c.plan.as_ref().unwrap();
        let close = i + 1 == executed.len();
        rows.extend(plan_rows(plan, 1, c.input.index, t, 3 * i, close)?);
        t += c.eh_duration;
    }
    Ok(rows)
}

pub fn rows_to_csv(rows: &[TrajectoryRow]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(csv_error)?;
    }
    String::from_utf8(w.into_inner().map_err(|e| PlanError::Io(e.to_string()))?).map_err(|e| PlanError::Io(e.to_string()))
}

pub fn rows_from_csv(text: &str) -> Result<Vec<TrajectoryRow>> {
    csv::Reader::from_reader(text.as_bytes())
        .deserialize()
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| PlanError::Parse(e.to_string()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BudgetRow {
    pub cycle: usize,
    pub cursor: usize,
    /// Empty when unlimited.
    pub budget: Option<f64>,
    pub solve_time: f64,
    pub eh_duration: f64,
    pub outcome: rhp_core::rhp::CycleOutcome,
}

pub fn budget_rows(episode: &EpisodeRecord) -> Vec<BudgetRow> {
    episode
        .cycles
        .iter()
        .map(|c| BudgetRow {
            cycle: c.input.index,
            cursor: c.input.cursor,
            budget: c.budget,
            solve_time: c.solve_time,
            eh_duration: c.eh_duration,
            outcome: c.outcome,
        })
        .collect()
}

pub fn budget_csv(episode: &EpisodeRecord) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in budget_rows(episode) {
        w.serialize(r).map_err(csv_error)?;
    }
    String::from_utf8(w.into_inner().map_err(|e| PlanError::Io(e.to_string()))?).map_err(|e| PlanError::Io(e.to_string()))
}

/// Writes `<stem>.csv` (trajectory) and `<stem>_budget.csv` into `dir`.
pub fn export_trajectory(episode: &EpisodeRecord, dir: &Path, stem: &str) -> Result<Vec<TrajectoryRow>> {
    let rows = trajectory_rows(episode)?;
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join(format!("{stem}.csv")), rows_to_csv(&rows)?)?;
    std::fs::write(dir.join(format!("{stem}_budget.csv")), budget_csv(episode)?)?;
    Ok(rows)
}

/// Largest forward-Euler defect between consecutive rows, recomputed from
/// the exported columns alone.
pub fn dynamics_residual(rows: &[TrajectoryRow], robot: &RobotModel) -> f64 {
    let mut worst: f64 = 0.0;
    for w in rows.windows(2) {
        let (a, b) = (&w[0], &w[1]);
        if a.tau == 0.0 {
            continue;
        }
        let c = a.com();
        let mut force = Vec3::zeros();
        let mut moment = Vec3::zeros();
        for foot in [Foot::Left, Foot::Right] {
            if let Some((p, f, m)) = a.foot(foot) {
                force += f;
                moment += (p - c).cross(&f) + m;
            }
        }
        let c_next = c + a.tau * a.velocity();
        let v_next = a.velocity() + a.tau * (force / robot.mass - robot.gravity);
        let mut d = (c_next - b.com()).amax().max((v_next - b.velocity()).amax());
        if a.model == PhaseModel::Full {
            d = d.max((a.angular_momentum() + a.tau * moment - b.angular_momentum()).amax());
        }
        worst = worst.max(d);
    }
    worst
}
