//! Domain types shared by every planner: centroidal state, contact forces,
//! feet, footsteps, terrain surfaces, kinematic polytopes and the robot model.
//!
//! All types are plain values; once constructed they are never mutated by the
//! planners and can be shared freely between threads.

mod frame;
mod polytope;
mod surface;
mod terrain;

pub use frame::{contact_foot_frame, FrameBranch, FootFrame};
pub use polytope::{KinematicConfig, KinematicPolytope};
pub use surface::{on_surface_point, surface_to_halfplanes, ContactSurface, SurfaceHalfPlanes};
pub use terrain::Terrain;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{PlanError, Result};

pub type Vec3 = Vector3<f64>;

/// Default Coulomb friction coefficient for surfaces that do not state one.
pub const DEFAULT_FRICTION: f64 = 0.5;

/// CoM position, CoM velocity and centroidal angular momentum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CentroidalState {
    /// CoM position [m].
    pub com_position: Vec3,
    /// CoM velocity [m/s].
    pub com_velocity: Vec3,
    /// Angular momentum about the CoM [kg m^2/s].
    pub angular_momentum: Vec3,
}

impl CentroidalState {
    pub const DIM: usize = 9;

    pub fn new(com_position: Vec3, com_velocity: Vec3, angular_momentum: Vec3) -> Self {
        Self {
            com_position,
            com_velocity,
            angular_momentum,
        }
    }

    /// State at rest with the CoM at `com_position`.
    pub fn at_rest(com_position: Vec3) -> Self {
        Self::new(com_position, Vec3::zeros(), Vec3::zeros())
    }

    /// Flattened `(c, cdot, L)`.
    pub fn to_array(&self) -> [f64; 9] {
        let mut out = [0.0; 9];
        out[0..3].copy_from_slice(self.com_position.as_slice());
        out[3..6].copy_from_slice(self.com_velocity.as_slice());
        out[6..9].copy_from_slice(self.angular_momentum.as_slice());
        out
    }

    pub fn from_slice(values: &[f64]) -> Result<Self> {
        if values.len() != Self::DIM {
            return Err(PlanError::Dimension {
                what: "centroidal state",
                expected: Self::DIM,
                got: values.len(),
            });
        }
        let state = Self::new(
            Vec3::new(values[0], values[1], values[2]),
            Vec3::new(values[3], values[4], values[5]),
            Vec3::new(values[6], values[7], values[8]),
        );
        if !state.is_finite() {
            return Err(PlanError::Range("centroidal state has non-finite components".into()));
        }
        Ok(state)
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
    }
}

/// Contact forces applied during one control interval, one per active contact point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlKnot {
    pub forces: Vec<Vec3>,
}

impl ControlKnot {
    pub fn new(forces: Vec<Vec3>) -> Self {
        Self { forces }
    }

    pub fn total(&self) -> Vec3 {
        self.forces.iter().fold(Vec3::zeros(), |acc, f| acc + f)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Foot {
    Left,
    Right,
}

impl Foot {
    pub fn other(self) -> Foot {
        match self {
            Foot::Left => Foot::Right,
            Foot::Right => Foot::Left,
        }
    }

    /// +1 for the left foot, -1 for the right foot.
    pub fn sign(self) -> f64 {
        match self {
            Foot::Left => 1.0,
            Foot::Right => -1.0,
        }
    }

    pub fn index(self) -> usize {
        match self {
            Foot::Left => 0,
            Foot::Right => 1,
        }
    }
}

/// A foot placement: center position on a surface plus heading.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Footstep {
    pub position: Vec3,
    pub surface_index: usize,
    /// Heading about the world vertical [rad]; the planners always use 0.
    pub yaw: f64,
}

impl Footstep {
    pub fn new(position: Vec3, surface_index: usize) -> Self {
        Self {
            position,
            surface_index,
            yaw: 0.0,
        }
    }

    /// Checks that the footstep lies on its surface plane within `tol` meters.
    pub fn validate(&self, terrain: &Terrain, tol: f64) -> Result<()> {
        let surface = terrain.surface(self.surface_index)?;
        let dist = surface.plane_distance(&self.position);
        if dist.abs() > tol {
            return Err(PlanError::Range(format!(
                "footstep is {dist:.3e} m off the plane of surface {}",
                self.surface_index
            )));
        }
        Ok(())
    }
}

/// Rectangular foot geometry; each vertex is a contact point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FootGeometry {
    pub half_length: f64,
    pub half_width: f64,
}

impl Default for FootGeometry {
    fn default() -> Self {
        Self {
            half_length: 0.1,
            half_width: 0.05,
        }
    }
}

impl FootGeometry {
    /// Contact point offsets in the foot frame, counter-clockwise from the rear right corner.
    pub fn corner_offsets(&self) -> [Vec3; 4] {
        let (a, b) = (self.half_length, self.half_width);
        [
            Vec3::new(-a, -b, 0.0),
            Vec3::new(a, -b, 0.0),
            Vec3::new(a, b, 0.0),
            Vec3::new(-a, b, 0.0),
        ]
    }
}

/// Mass, gravity, foot and kinematic description of the robot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobotModel {
    /// Total mass [kg].
    pub mass: f64,
    /// Gravity vector as it appears in `cddot = sum(f)/m - g` [m/s^2].
    pub gravity: Vec3,
    pub foot: FootGeometry,
    /// Nominal CoM height above the stance feet [m].
    pub nominal_com_height: f64,
    pub kinematics: KinematicConfig,
}

impl Default for RobotModel {
    fn default() -> Self {
        Self {
            mass: 100.0,
            gravity: Vec3::new(0.0, 0.0, 9.81),
            foot: FootGeometry::default(),
            nominal_com_height: 0.8,
            kinematics: KinematicConfig::default(),
        }
    }
}

impl RobotModel {
    /// Body weight `m |g|` [N].
    pub fn weight(&self) -> f64 {
        self.mass * self.gravity.norm()
    }
}
