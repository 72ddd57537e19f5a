use nalgebra::Matrix3;
use serde::{Deserialize, Serialize};

use super::{Foot, Vec3};
use crate::error::{PlanError, Result};

/// Convex polytope `{q : a_i . q <= b_i}` in a foot-local frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KinematicPolytope {
    pub half_planes: Vec<(Vec3, f64)>,
}

/// Half-width of the box used to certify boundedness.
const CERTIFY_BOX: f64 = 1.0e3;

impl KinematicPolytope {
    pub fn new(half_planes: Vec<(Vec3, f64)>) -> Result<Self> {
        let poly = Self { half_planes };
        poly.validate()?;
        Ok(poly)
    }

    /// Axis-aligned box `lo <= q <= hi`.
    pub fn from_box(lo: Vec3, hi: Vec3) -> Result<Self> {
        let mut half_planes = Vec::with_capacity(6);
        for axis in 0..3 {
            let mut e = Vec3::zeros();
            e[axis] = 1.0;
            half_planes.push((e, hi[axis]));
            half_planes.push((-e, -lo[axis]));
        }
        Self::new(half_planes)
    }

    pub fn max_violation(&self, q: &Vec3) -> f64 {
        self.half_planes
            .iter()
            .map(|(a, b)| a.dot(q) - b)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn contains(&self, q: &Vec3, tol: f64) -> bool {
        self.max_violation(q) <= tol
    }

    /// Certifies the polytope is nonempty and bounded by enumerating the vertices of
    /// its intersection with a large box: it must have a vertex, and no vertex may
    /// touch the box.
    pub fn validate(&self) -> Result<()> {
        if self.half_planes.is_empty() {
            return Err(PlanError::InvalidPolytope("no half-planes".into()));
        }
        for (a, b) in &self.half_planes {
            if !b.is_finite() || !a.iter().all(|v| v.is_finite()) || a.norm() == 0.0 {
                return Err(PlanError::InvalidPolytope("degenerate half-plane".into()));
            }
        }
        let mut planes = self.half_planes.clone();
        let own = planes.len();
        for axis in 0..3 {
            let mut e = Vec3::zeros();
            e[axis] = 1.0;
            planes.push((e, CERTIFY_BOX));
            planes.push((-e, CERTIFY_BOX));
        }
        let mut found_vertex = false;
        let m = planes.len();
        for i in 0..m {
            for j in (i + 1)..m {
                for k in (j + 1)..m {
                    let a = Matrix3::from_rows(&[
                        planes[i].0.transpose(),
                        planes[j].0.transpose(),
                        planes[k].0.transpose(),
                    ]);
                    let Some(inv) = a.try_inverse() else { continue };
                    let v = inv * Vec3::new(planes[i].1, planes[j].1, planes[k].1);
                    let scale = 1.0 + v.amax();
                    if planes.iter().any(|(a, b)| a.dot(&v) - b > 1e-9 * scale) {
                        continue;
                    }
                    found_vertex = true;
                    let on_box = [i, j, k].iter().any(|&idx| idx >= own)
                        && v.amax() >= CERTIFY_BOX * (1.0 - 1e-9);
                    if on_box {
                        return Err(PlanError::InvalidPolytope("polytope is unbounded".into()));
                    }
                }
            }
        }
        if !found_vertex {
            return Err(PlanError::InvalidPolytope("polytope is empty".into()));
        }
        Ok(())
    }
}

/// Kinematic polytopes: CoM reachability relative to each foot in contact, and
/// footstep reachability relative to the previous footstep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KinematicConfig {
    /// CoM relative to an active foot, in that foot's surface frame.
    pub com: KinematicPolytope,
    /// Left footstep relative to the right (stance) foot.
    pub reach_left: KinematicPolytope,
    /// Right footstep relative to the left (stance) foot.
    pub reach_right: KinematicPolytope,
}

impl KinematicConfig {
    pub fn reach_for(&self, swing: Foot) -> &KinematicPolytope {
        match swing {
            Foot::Left => &self.reach_left,
            Foot::Right => &self.reach_right,
        }
    }
}

impl Default for KinematicConfig {
    fn default() -> Self {
        let com = KinematicPolytope::from_box(Vec3::new(-0.25, -0.3, 0.6), Vec3::new(0.25, 0.3, 0.95))
            .expect("default CoM box");
        let reach_left =
            KinematicPolytope::from_box(Vec3::new(-0.4, 0.15, -0.3), Vec3::new(0.4, 0.35, 0.3))
                .expect("default reach box");
        let reach_right =
            KinematicPolytope::from_box(Vec3::new(-0.4, -0.35, -0.3), Vec3::new(0.4, -0.15, 0.3))
                .expect("default reach box");
        Self {
            com,
            reach_left,
            reach_right,
        }
    }
}
