use serde::{Deserialize, Serialize};

use crate::geometry::{wrap_angle, Vec2};
use crate::scenario::Footprint;

pub const ACCEL_MIN: f64 = -6.0;
pub const ACCEL_MAX: f64 = 4.0;
/// Front-wheel angle at full steering input, radians.
pub const MAX_WHEEL_ANGLE: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AgentState {
    pub position: Vec2,
    /// Radians in (-pi, pi].
    pub heading: f64,
    /// m/s, never negative.
    pub speed: f64,
    pub footprint: Footprint,
}

impl AgentState {
    pub fn velocity(&self) -> Vec2 {
        Vec2::from_angle(self.heading) * self.speed
    }

    pub fn forward(&self) -> Vec2 {
        Vec2::from_angle(self.heading)
    }

    /// Expresses a world point in this agent's frame (x forward, y left).
    pub fn to_local(&self, p: Vec2) -> Vec2 {
        (p - self.position).rotate(-self.heading)
    }

    pub fn corners(&self) -> [Vec2; 4] {
        let f = self.forward() * (self.footprint.length / 2.0);
        let l = self.forward().perp() * (self.footprint.width / 2.0);
        let c = self.position;
        [c + f + l, c + f - l, c - f - l, c - f + l]
    }
}

/// Normalized steering and acceleration commands, each in [-1, 1].
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Action {
    pub steer: f64,
    pub accel: f64,
}

impl Action {
    pub fn new(steer: f64, accel: f64) -> Self {
        let clamp = |v: f64| if v.is_nan() { 0.0 } else { v.clamp(-1.0, 1.0) };
        Self {
            steer: clamp(steer),
            accel: clamp(accel),
        }
    }

    /// Longitudinal acceleration in m/s²; negative inputs scale to the braking limit.
    pub fn accel_mps2(&self) -> f64 {
        if self.accel >= 0.0 {
            self.accel * ACCEL_MAX
        } else {
            -self.accel * ACCEL_MIN
        }
    }

    pub fn wheel_angle(&self) -> f64 {
        self.steer * MAX_WHEEL_ANGLE
    }

    /// Normalized command producing acceleration `a` (m/s²), clamped to the limits.
    pub fn accel_command(a: f64) -> f64 {
        if a >= 0.0 {
            (a / ACCEL_MAX).min(1.0)
        } else {
            (a / -ACCEL_MIN).max(-1.0)
        }
    }
}

/// One kinematic-bicycle step. The speed is updated first and the displacement uses the
/// new speed along the mid-step heading.
pub fn step_kinematics(state: &AgentState, action: &Action, dt: f64) -> AgentState {
    let action = Action::new(action.steer, action.accel);
    let speed = (state.speed + action.accel_mps2() * dt).max(0.0);
    let yaw_rate = speed * action.wheel_angle().tan() / state.footprint.wheelbase();
    let d_heading = yaw_rate * dt;
    let mid = state.heading + 0.5 * d_heading;
    AgentState {
        position: state.position + Vec2::from_angle(mid) * (speed * dt),
        heading: wrap_angle(state.heading + d_heading),
        speed,
        footprint: state.footprint,
    }
}
