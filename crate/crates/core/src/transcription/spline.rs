use crate::error::{PlanError, Result};
use crate::model::Vec3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplineSample {
    pub time: f64,
    pub position: Vec3,
}

/// Swing-foot trajectory between two footholds sampled at `samples + 1`
/// uniform times. Horizontal motion follows the cubic `3u² − 2u³` (zero
/// end velocities); the height adds a bump `h·16u²(1−u)²` with
/// `h = clearance + |z₁ − z₀|`, which keeps the apex at least `clearance`
/// above the higher endpoint.
pub fn swing_spline(p_from: &Vec3, p_to: &Vec3, clearance: f64, duration: f64, samples: usize) -> Result<Vec<SplineSample>> {
    if !(duration > 0.0) {
        return Err(PlanError::Range(format!("swing duration must be positive, got {duration}")));
    }
    if clearance < 0.0 || samples == 0 {
        return Err(PlanError::Range("clearance must be non-negative and samples positive".into()));
    }
    let h = clearance + (p_to.z - p_from.z).abs();
    Ok((0..=samples)
        .map(|i| {
            let u = i as f64 / samples as f64;
            let s = u * u * (3.0 - 2.0 * u);
            let bump = 16.0 * u * u * (1.0 - u) * (1.0 - u);
            let mut p = p_from + (p_to - p_from) * s;
            p.z += h * bump;
            let position = match i {
                0 => *p_from,
                _ if i == samples => *p_to,
                _ => p,
            };
            SplineSample {
                time: duration * u,
                position,
            }
        })
        .collect())
}
