use nalgebra::Matrix3;

use super::{ContactSurface, Footstep, Vec3};

const DEGENERATE_TOL: f64 = 1e-9;

/// Which reference direction produced the frame's x-axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FrameBranch {
    /// Heading direction projected on the surface plane.
    Heading,
    /// Heading was parallel to the normal; the lateral direction was projected instead.
    Lateral,
}

/// Frame attached to the stance foot and aligned with its contact surface.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FootFrame {
    /// Columns are the frame axes expressed in the world.
    pub rotation: Matrix3<f64>,
    pub origin: Vec3,
    pub branch: FrameBranch,
}

impl FootFrame {
    pub fn point_to_local(&self, p: &Vec3) -> Vec3 {
        self.rotation.transpose() * (p - self.origin)
    }

    pub fn point_to_world(&self, q: &Vec3) -> Vec3 {
        self.origin + self.rotation * q
    }

    pub fn vector_to_local(&self, v: &Vec3) -> Vec3 {
        self.rotation.transpose() * v
    }

    pub fn vector_to_world(&self, v: &Vec3) -> Vec3 {
        self.rotation * v
    }
}

pub(crate) fn surface_aligned_rotation(normal: &Vec3, yaw: f64) -> (Matrix3<f64>, FrameBranch) {
    let z = normal.normalize();
    let heading = Vec3::new(yaw.cos(), yaw.sin(), 0.0);
    let projected = heading - heading.dot(&z) * z;
    let (x, branch) = if projected.norm() > DEGENERATE_TOL {
        (projected.normalize(), FrameBranch::Heading)
    } else {
        let lateral = Vec3::new(-yaw.sin(), yaw.cos(), 0.0);
        let projected = lateral - lateral.dot(&z) * z;
        // lateral is orthogonal to heading, so it cannot also be parallel to z
        (projected.normalize().cross(&z), FrameBranch::Lateral)
    };
    let y = z.cross(&x);
    (Matrix3::from_columns(&[x, y, z]), branch)
}

/// Frame at the stance foot center whose z-axis is the surface normal and whose
/// x-axis is the foot heading projected onto the surface plane.
pub fn contact_foot_frame(stance_foot: &Footstep, stance_surface: &ContactSurface) -> FootFrame {
    let (rotation, branch) = surface_aligned_rotation(&stance_surface.unit_normal(), stance_foot.yaw);
    FootFrame {
        rotation,
        origin: stance_foot.position,
        branch,
    }
}
