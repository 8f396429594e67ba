//! Oriented-box contact via the separating axis test, and off-road checks.

use serde::{Deserialize, Serialize};

use super::kinematics::AgentState;
use crate::geometry::Vec2;
use crate::scenario::MapInfo;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContactInfo {
    /// Unit axis of minimum penetration, oriented from the first box to the second.
    pub normal: Vec2,
    /// Overlap along `normal`, meters.
    pub penetration: f64,
    /// (velocity_b - velocity_a) · normal; negative while closing.
    pub relative_speed: f64,
}

fn half_extent_along(state: &AgentState, axis: Vec2) -> f64 {
    let f = state.forward();
    0.5 * state.footprint.length * f.dot(axis).abs()
        + 0.5 * state.footprint.width * f.perp().dot(axis).abs()
}

/// Returns contact information when the two footprints overlap with positive depth.
pub fn detect_collision(a: &AgentState, b: &AgentState) -> Option<ContactInfo> {
    let d = b.position - a.position;
    let reach = 0.5 * (a.footprint.length.hypot(a.footprint.width)
        + b.footprint.length.hypot(b.footprint.width));
    if d.norm_sq() > reach * reach {
        return None;
    }
    let fa = a.forward();
    let fb = b.forward();
    let axes = [fa, fa.perp(), fb, fb.perp()];
    let mut best: Option<(f64, Vec2)> = None;
    for axis in axes {
        let overlap = half_extent_along(a, axis) + half_extent_along(b, axis) - d.dot(axis).abs();
        if overlap <= 0.0 {
            return None;
        }
        if best.is_none_or(|(o, _)| overlap < o) {
            best = Some((overlap, axis));
        }
    }
    let (penetration, axis) = best?;
    let normal = if d.dot(axis) < 0.0 { -axis } else { axis };
    Some(ContactInfo {
        normal,
        penetration,
        relative_speed: (b.velocity() - a.velocity()).dot(normal),
    })
}

/// True iff any footprint corner lies outside the drivable region.
pub fn detect_offroad(state: &AgentState, map: &MapInfo) -> bool {
    state.corners().iter().any(|c| !map.is_drivable(*c))
}
