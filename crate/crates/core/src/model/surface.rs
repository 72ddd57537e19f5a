use nalgebra::{Matrix2, Matrix3, Vector2};
use serde::{Deserialize, Serialize};

use super::{Vec3, DEFAULT_FRICTION};
use crate::error::{PlanError, Result};

const PLANAR_TOL: f64 = 1e-9;

/// A planar parallelogram contact patch.
///
/// Vertices are ordered counter-clockwise when looking down the outward normal,
/// so that `r1 x r2` points along the normal with `r1 = V2 - V1`, `r2 = V4 - V1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContactSurface {
    vertices: [Vec3; 4],
    unit_normal: Vec3,
    friction_coefficient: f64,
}

impl ContactSurface {
    pub fn new(vertices: [Vec3; 4], friction_coefficient: f64) -> Result<Self> {
        if !friction_coefficient.is_finite() || friction_coefficient < 0.0 {
            return Err(PlanError::InvalidSurface(format!(
                "friction coefficient {friction_coefficient} must be finite and non-negative"
            )));
        }
        if vertices.iter().any(|v| !v.iter().all(|c| c.is_finite())) {
            return Err(PlanError::InvalidSurface("non-finite vertex".into()));
        }
        let r1 = vertices[1] - vertices[0];
        let r2 = vertices[3] - vertices[0];
        if r1.norm() <= PLANAR_TOL || r2.norm() <= PLANAR_TOL {
            return Err(PlanError::InvalidSurface("degenerate border".into()));
        }
        let cross = r1.cross(&r2);
        if cross.norm() <= PLANAR_TOL * r1.norm().max(r2.norm()) {
            return Err(PlanError::InvalidSurface("borders are parallel".into()));
        }
        let normal = cross.normalize();
        let off_plane = normal.dot(&(vertices[2] - vertices[0]));
        if off_plane.abs() > PLANAR_TOL {
            return Err(PlanError::InvalidSurface(format!(
                "vertices are not coplanar (offset {off_plane:.3e} m)"
            )));
        }
        let closure = (vertices[2] - vertices[3]) - r1;
        if closure.norm() > PLANAR_TOL {
            return Err(PlanError::InvalidSurface(format!(
                "vertices do not form a parallelogram (mismatch {:.3e} m)",
                closure.norm()
            )));
        }
        Ok(Self {
            vertices,
            unit_normal: normal,
            friction_coefficient,
        })
    }

    /// Axis-aligned rectangle on a horizontal plane at height `z`.
    pub fn horizontal(center: Vec3, half_x: f64, half_y: f64) -> Result<Self> {
        let v = |dx: f64, dy: f64| center + Vec3::new(dx, dy, 0.0);
        Self::new(
            [
                v(-half_x, -half_y),
                v(half_x, -half_y),
                v(half_x, half_y),
                v(-half_x, half_y),
            ],
            DEFAULT_FRICTION,
        )
    }

    pub fn with_friction(self, mu: f64) -> Result<Self> {
        Self::new(self.vertices, mu)
    }

    pub fn vertices(&self) -> &[Vec3; 4] {
        &self.vertices
    }

    pub fn unit_normal(&self) -> Vec3 {
        self.unit_normal
    }

    pub fn friction(&self) -> f64 {
        self.friction_coefficient
    }

    /// First border `V2 - V1`.
    pub fn border1(&self) -> Vec3 {
        self.vertices[1] - self.vertices[0]
    }

    /// Second border `V4 - V1`.
    pub fn border2(&self) -> Vec3 {
        self.vertices[3] - self.vertices[0]
    }

    pub fn center(&self) -> Vec3 {
        self.vertices.iter().fold(Vec3::zeros(), |acc, v| acc + v) / 4.0
    }

    /// Signed distance of `p` from the surface plane along the normal.
    pub fn plane_distance(&self, p: &Vec3) -> f64 {
        self.unit_normal.dot(&(p - self.vertices[0]))
    }

    /// Inclination of the surface with respect to the horizontal [deg].
    pub fn inclination_deg(&self) -> f64 {
        self.unit_normal.z.clamp(-1.0, 1.0).acos().to_degrees()
    }

    /// Orthonormal tangent basis `(t1, t2)` used by the linearized friction cone:
    /// `t1` along the first border, `t2 = n x t1`.
    pub fn tangents(&self) -> (Vec3, Vec3) {
        let t1 = self.border1().normalize();
        let t2 = self.unit_normal.cross(&t1);
        (t1, t2)
    }

    /// Rotation whose columns are the foot axes on this surface for a given heading:
    /// x is the heading projected on the plane, z the surface normal.
    pub fn foot_rotation(&self, yaw: f64) -> Matrix3<f64> {
        super::frame::surface_aligned_rotation(&self.unit_normal, yaw).0
    }

    /// Coordinates `(a1, a2)` with `p = V1 + a1 r1 + a2 r2` for the in-plane
    /// projection of `p`; not clamped.
    pub fn surface_coordinates(&self, p: &Vec3) -> (f64, f64) {
        let r1 = self.border1();
        let r2 = self.border2();
        let d = p - self.vertices[0];
        let gram = Matrix2::new(r1.dot(&r1), r1.dot(&r2), r1.dot(&r2), r2.dot(&r2));
        let rhs = Vector2::new(r1.dot(&d), r2.dot(&d));
        // The Gram matrix is SPD for non-degenerate borders.
        let sol = gram
            .cholesky()
            .map(|c| c.solve(&rhs))
            .unwrap_or_else(Vector2::zeros);
        (sol.x, sol.y)
    }

    /// Applies the rigid motion `p -> rotation * p + translation` to the patch.
    pub fn transformed(&self, rotation: &Matrix3<f64>, translation: &Vec3) -> Self {
        let vertices = self.vertices.map(|v| rotation * v + translation);
        Self {
            vertices,
            unit_normal: (rotation * self.unit_normal).normalize(),
            friction_coefficient: self.friction_coefficient,
        }
    }
}

/// Half-plane form of a surface: `d . p = e` and `S p <= s`.
#[derive(Debug, Clone, PartialEq)]
pub struct SurfaceHalfPlanes {
    pub normal: Vec3,
    pub offset: f64,
    /// Boundary rows, one per edge `V_i -> V_{i+1}`; each is the outward in-plane edge normal.
    pub rows: [Vec3; 4],
    pub bounds: [f64; 4],
}

impl SurfaceHalfPlanes {
    /// Largest violation of the boundary inequalities (negative when strictly inside).
    pub fn max_boundary_violation(&self, p: &Vec3) -> f64 {
        self.rows
            .iter()
            .zip(self.bounds.iter())
            .map(|(row, b)| row.dot(p) - b)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn plane_residual(&self, p: &Vec3) -> f64 {
        self.normal.dot(p) - self.offset
    }

    pub fn contains(&self, p: &Vec3, tol: f64) -> bool {
        self.plane_residual(p).abs() <= tol && self.max_boundary_violation(p) <= tol
    }
}

pub fn surface_to_halfplanes(surface: &ContactSurface) -> SurfaceHalfPlanes {
    let n = surface.unit_normal;
    let v = surface.vertices;
    let mut rows = [Vec3::zeros(); 4];
    let mut bounds = [0.0; 4];
    for i in 0..4 {
        let edge = v[(i + 1) % 4] - v[i];
        let inward = n.cross(&edge).normalize();
        rows[i] = -inward;
        bounds[i] = -inward.dot(&v[i]);
    }
    SurfaceHalfPlanes {
        normal: n,
        offset: n.dot(&v[0]),
        rows,
        bounds,
    }
}

/// `V1 + a1 r1 + a2 r2` for `a1, a2` in `[0, 1]`.
pub fn on_surface_point(surface: &ContactSurface, alpha1: f64, alpha2: f64) -> Result<Vec3> {
    for (name, a) in [("alpha1", alpha1), ("alpha2", alpha2)] {
        if !(0.0..=1.0).contains(&a) {
            return Err(PlanError::Range(format!("{name} = {a} outside [0, 1]")));
        }
    }
    Ok(surface.vertices[0] + alpha1 * surface.border1() + alpha2 * surface.border2())
}
