//! Intelligent Driver Model car following with path-based leader selection.

use serde::{Deserialize, Serialize};

use super::kinematics::{AgentState, ACCEL_MAX, ACCEL_MIN};
use crate::geometry::{Polyline, Vec2};
use crate::scenario::Trajectory;

pub const LEADER_LOOKAHEAD: f64 = 60.0;
/// Fraction of a lane width within which another agent counts as being in the follower's lane.
pub const LEADER_LATERAL_FRACTION: f64 = 0.75;
const FALLBACK_DESIRED_SPEED: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IdmParams {
    /// m/s
    pub desired_speed: f64,
    /// m
    pub min_gap: f64,
    /// s
    pub time_headway: f64,
    /// m/s²
    pub max_accel: f64,
    /// m/s²
    pub comfortable_decel: f64,
    pub exponent: f64,
}

impl Default for IdmParams {
    fn default() -> Self {
        Self {
            desired_speed: FALLBACK_DESIRED_SPEED,
            min_gap: 2.0,
            time_headway: 1.5,
            max_accel: 2.0,
            comfortable_decel: 4.0,
            exponent: 4.0,
        }
    }
}

impl IdmParams {
    /// Defaults with the desired speed set to the agent's peak recorded speed.
    pub fn for_trajectory(traj: &Trajectory) -> Self {
        let peak = traj.peak_speed();
        Self {
            desired_speed: if peak > 0.1 {
                peak
            } else {
                FALLBACK_DESIRED_SPEED
            },
            ..Self::default()
        }
    }

    pub fn is_valid(&self) -> bool {
        [
            self.desired_speed,
            self.min_gap,
            self.time_headway,
            self.max_accel,
            self.comfortable_decel,
            self.exponent,
        ]
        .iter()
        .all(|v| *v > 0.0 && v.is_finite())
    }
}

/// IDM acceleration in m/s², clamped to the vehicle limits. `leader` is (gap, leader speed).
pub fn idm_accel(speed: f64, leader: Option<(f64, f64)>, params: &IdmParams) -> f64 {
    let free = 1.0 - (speed / params.desired_speed).powf(params.exponent);
    let interaction = match leader {
        Some((gap, leader_speed)) => {
            let dv = speed - leader_speed;
            let dynamic = speed * params.time_headway
                + speed * dv / (2.0 * (params.max_accel * params.comfortable_decel).sqrt());
            let s_star = params.min_gap + dynamic.max(0.0);
            let ratio = s_star / gap.max(1e-3);
            ratio * ratio
        }
        None => 0.0,
    };
    (params.max_accel * (free - interaction)).clamp(ACCEL_MIN, ACCEL_MAX)
}

/// Nearest agent ahead along `path` whose lateral offset is within the lane band.
/// Returns (bumper gap, speed along the path).
pub fn find_leader<'a>(
    follower: &AgentState,
    path: &Polyline,
    lane_width: f64,
    others: impl Iterator<Item = &'a AgentState>,
) -> Option<(f64, f64)> {
    let me = path.project(follower.position).s;
    let band = LEADER_LATERAL_FRACTION * lane_width;
    let mut best: Option<(f64, f64)> = None;
    for o in others {
        let pr = path.project(o.position);
        let ahead = pr.s - me;
        if ahead <= 0.0 || ahead > LEADER_LOOKAHEAD || pr.lateral.abs() > band {
            continue;
        }
        let gap = ahead - 0.5 * (follower.footprint.length + o.footprint.length);
        let tangent: Vec2 = path.tangent_at(pr.s);
        let along = o.velocity().dot(tangent).max(0.0);
        if best.is_none_or(|(g, _)| gap < g) {
            best = Some((gap, along));
        }
    }
    best.map(|(g, v)| (g.max(0.1), v))
}
