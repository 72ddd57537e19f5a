#![allow(dead_code)]

use nalgebra::Rotation3;
use rhp_core::model::{CentroidalState, ContactSurface, Foot, RobotModel, Terrain, Vec3};
use rhp_core::transcription::{default_start_feet, HorizonSpec};

pub const SPACING: f64 = 0.45;
pub const LANE: f64 = 0.225;

/// Two lanes of 0.4 m patches; step `i` lands on patch `i/2 + 1` of the swing lane.
/// `pitch_deg(k)` tilts patch `k` of both lanes about the lateral axis.
pub fn lane_terrain(steps: usize, pitch_deg: impl Fn(usize) -> f64) -> Terrain {
    let mut surfaces = Vec::new();
    let patches = steps / 2 + 2;
    let mut height = 0.0;
    for k in 0..patches {
        let pitch = pitch_deg(k).to_radians();
        let rot = Rotation3::from_axis_angle(&Vec3::y_axis(), -pitch);
        for lane in [LANE, -LANE] {
            let c = Vec3::new(k as f64 * SPACING, lane, height);
            let corners = [(-0.2, -0.2), (0.2, -0.2), (0.2, 0.2), (-0.2, 0.2)]
                .map(|(x, y)| c + rot * Vec3::new(x, y, 0.0));
            surfaces.push(ContactSurface::new(corners, 0.5).unwrap());
        }
        height += 0.0;
    }
    // surface 2k = left lane patch k, 2k+1 = right lane patch k
    let mut seq = Vec::new();
    for i in 0..steps {
        let foot = if i % 2 == 0 { Foot::Left } else { Foot::Right };
        let k = i / 2 + 1;
        seq.push(2 * k + foot.index());
    }
    Terrain::new(surfaces, (0, 1), seq).unwrap()
}

pub fn flat_terrain(steps: usize) -> Terrain {
    lane_terrain(steps, |_| 0.0)
}

pub fn start_state(terrain: &Terrain, robot: &RobotModel) -> CentroidalState {
    let feet = default_start_feet(terrain).unwrap();
    let mid = 0.5 * (feet[0].position + feet[1].position);
    CentroidalState::at_rest(mid + Vec3::new(0.0, 0.0, robot.nominal_com_height))
}

/// Goal above the last two step surfaces.
pub fn goal_state(terrain: &Terrain, robot: &RobotModel) -> CentroidalState {
    let n = terrain.step_sequence.len();
    let a = terrain.surfaces[terrain.step_sequence[n - 1]].center();
    let b = terrain.surfaces[terrain.step_sequence[n.saturating_sub(2)]].center();
    CentroidalState::at_rest(0.5 * (a + b) + Vec3::new(0.0, 0.0, robot.nominal_com_height))
}

pub fn horizon(steps: usize) -> HorizonSpec {
    HorizonSpec::new(steps, 8, Foot::Left).unwrap()
}
