//! Low-level steering and speed controllers shared by the reactive policies.

use super::kinematics::{Action, AgentState, MAX_WHEEL_ANGLE};
use crate::geometry::{wrap_angle, Polyline, Vec2};
use crate::scenario::{Trajectory, DT};

/// Normalized steering command that points the vehicle at `target` (pure pursuit).
pub fn pure_pursuit(state: &AgentState, target: Vec2) -> f64 {
    let to = target - state.position;
    let ld = to.norm();
    if ld < 1e-6 {
        return 0.0;
    }
    let alpha = wrap_angle(to.angle() - state.heading);
    let curvature = 2.0 * alpha.sin() / ld;
    let wheel = (curvature * state.footprint.wheelbase()).atan();
    (wheel / MAX_WHEEL_ANGLE).clamp(-1.0, 1.0)
}

/// Lookahead distance for path following at `speed`.
pub fn lookahead(speed: f64) -> f64 {
    (0.8 * speed).max(4.0)
}

/// A path extended by `extension` meters past its end along the final direction, so
/// agents that finish their route keep a well-defined target.
pub fn extended_path(points: &[Vec2], extension: f64) -> Option<Polyline> {
    let base = Polyline::new(points)?;
    let end = base.point_at(base.length());
    let dir = base.tangent_at(base.length());
    let mut pts = base.points().to_vec();
    pts.push(end + dir * extension);
    Polyline::new(&pts)
}

/// Steering toward the lookahead point on `path`.
pub fn follow_path(state: &AgentState, path: &Polyline) -> f64 {
    let s = path.project(state.position).s;
    pure_pursuit(state, path.point_at(s + lookahead(state.speed)))
}

/// Time-indexed reference tracking: dead-beat speed control onto the next reference
/// point plus pure pursuit toward a point at least `lookahead` ahead in time order.
pub fn track_reference(state: &AgentState, reference: &Trajectory, step: usize) -> Action {
    let next = match reference.at(step + 1) {
        Some(p) => p,
        None => return Action::new(0.0, Action::accel_command(-state.speed / DT)),
    };
    let forward = state.forward();
    let along = (next - state.position).dot(forward);
    let target_speed = (along / DT).max(0.0);
    let accel = Action::accel_command((target_speed - state.speed) / DT);

    let ld = (0.6 * state.speed).max(2.5);
    let mut target = None;
    let mut k = step + 1;
    while let Some(p) = reference.at(k) {
        if p.dist(state.position) >= ld {
            target = Some(p);
            break;
        }
        k += 1;
    }
    let steer = match target {
        Some(p) => pure_pursuit(state, p),
        None => {
            let last = reference.last();
            if last.dist(state.position) > 0.3 {
                pure_pursuit(state, last)
            } else {
                0.0
            }
        }
    };
    Action::new(steer, accel)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::Footprint;
    use crate::sim::kinematics::step_kinematics;

    #[test]
    fn pure_pursuit_signs() {
        let s = AgentState {
            position: Vec2::ZERO,
            heading: 0.0,
            speed: 5.0,
            footprint: Footprint::default(),
        };
        assert!(pure_pursuit(&s, Vec2::new(10.0, 2.0)) > 0.0);
        assert!(pure_pursuit(&s, Vec2::new(10.0, -2.0)) < 0.0);
        assert_eq!(pure_pursuit(&s, Vec2::new(10.0, 0.0)), 0.0);
    }

    #[test]
    fn tracks_a_gentle_arc() {
        // reference: 10 m/s along a radius-40 arc
        let r = 40.0;
        let pts: Vec<Vec2> = (0..80)
            .map(|k| {
                let a = k as f64 * DT * 10.0 / r;
                Vec2::new(r * a.sin(), r * (1.0 - a.cos()))
            })
            .collect();
        let reference = Trajectory::new(0, pts).unwrap();
        let mut s = AgentState {
            position: reference.first(),
            heading: 0.0,
            speed: 10.0,
            footprint: Footprint::default(),
        };
        let mut worst: f64 = 0.0;
        for k in 0..79 {
            let a = track_reference(&s, &reference, k);
            s = step_kinematics(&s, &a, DT);
            worst = worst.max(s.position.dist(reference.at(k + 1).unwrap()));
        }
        assert!(worst < 0.5, "tracking error {worst}");
    }
}
