//! Parameterized feedback ego: Stanley-style lane keeping along its recorded route,
//! cruise control toward a scaled desired speed, and threat-triggered braking/evasion.

use serde::{Deserialize, Serialize};

use crate::geometry::{wrap_angle, Polyline};
use crate::scenario::Trajectory;
use crate::sim::kinematics::{Action, AgentState, MAX_WHEEL_ANGLE};
use crate::sim::policy::{reference_path, Controller, WorldView};

pub const EGO_PARAM_DIM: usize = 6;

/// Cap on the evasive lateral offset so evasion stays inside a typical lane pair.
const MAX_SWERVE_OFFSET: f64 = 1.5;
/// Prediction horizon for threat detection (s).
const THREAT_HORIZON: f64 = 3.0;
/// Predicted separation below which another agent counts as a threat (m).
const THREAT_RADIUS: f64 = 3.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EgoParams {
    pub lane_gain: f64,
    pub heading_gain: f64,
    pub speed_scale: f64,
    /// Standoff distance kept to predicted conflict points (m).
    pub headway: f64,
    pub brake_gain: f64,
    pub swerve_gain: f64,
}

impl Default for EgoParams {
    fn default() -> Self {
        Self {
            lane_gain: 1.0,
            heading_gain: 1.5,
            speed_scale: 1.0,
            headway: 8.0,
            brake_gain: 1.0,
            swerve_gain: 0.0,
        }
    }
}

impl EgoParams {
    pub fn to_vec(&self) -> [f64; EGO_PARAM_DIM] {
        [
            self.lane_gain,
            self.heading_gain,
            self.speed_scale,
            self.headway,
            self.brake_gain,
            self.swerve_gain,
        ]
    }

    pub fn from_vec(v: [f64; EGO_PARAM_DIM]) -> Self {
        Self {
            lane_gain: v[0],
            heading_gain: v[1],
            speed_scale: v[2],
            headway: v[3],
            brake_gain: v[4],
            swerve_gain: v[5],
        }
    }
}

/// Closed parameter box for the search.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EgoParamBounds {
    pub lower: [f64; EGO_PARAM_DIM],
    pub upper: [f64; EGO_PARAM_DIM],
}

impl Default for EgoParamBounds {
    fn default() -> Self {
        Self {
            lower: [0.2, 0.2, 0.5, 2.0, 0.0, 0.0],
            upper: [3.0, 3.0, 1.3, 30.0, 3.0, 1.5],
        }
    }
}

impl EgoParamBounds {
    pub fn clamp(&self, p: &EgoParams) -> EgoParams {
        let mut v = p.to_vec();
        for (i, x) in v.iter_mut().enumerate() {
            *x = x.clamp(self.lower[i], self.upper[i]);
        }
        EgoParams::from_vec(v)
    }

    pub fn contains(&self, p: &EgoParams) -> bool {
        p.to_vec()
            .iter()
            .enumerate()
            .all(|(i, x)| *x >= self.lower[i] && *x <= self.upper[i])
    }

    pub fn is_valid(&self) -> bool {
        (0..EGO_PARAM_DIM).all(|i| {
            self.lower[i].is_finite() && self.upper[i].is_finite() && self.lower[i] <= self.upper[i]
        })
    }
}

pub struct EgoController {
    params: EgoParams,
    path: Polyline,
    desired_speed: f64,
}

impl EgoController {
    pub fn new(params: EgoParams, reference: &Trajectory) -> Self {
        let peak = reference.peak_speed();
        let base = if peak > 0.5 { peak } else { 10.0 };
        Self {
            params,
            path: reference_path(reference),
            desired_speed: params.speed_scale * base,
        }
    }
}

/// Deceleration used to plan stops behind a leader (m/s²).
const COMFORT_DECEL: f64 = 3.0;
/// Lateral half-width of the corridor in which another agent counts as a leader (m).
const LEADER_CORRIDOR: f64 = 2.2;
const LEADER_RANGE: f64 = 60.0;

/// Distance along the route to the closest agent inside the route corridor ahead.
fn leader_gap(me: &AgentState, path: &Polyline, s_me: f64, view: &WorldView<'_>) -> Option<f64> {
    view.others()
        .filter_map(|o| {
            let pr = path.project(o.state.position);
            let gap = pr.s - s_me;
            (gap > 0.0 && gap <= LEADER_RANGE && pr.lateral.abs() <= LEADER_CORRIDOR && me.position.dist(o.state.position) <= LEADER_RANGE + 5.0)
                .then_some(gap)
        })
        .min_by(f64::total_cmp)
}

struct Threat {
    /// Longitudinal distance to the predicted conflict point in the ego frame.
    ahead: f64,
    /// Lateral side of the threat at closest approach (+ left).
    lateral: f64,
    separation: f64,
}

fn nearest_threat(me: &AgentState, view: &WorldView<'_>) -> Option<Threat> {
    let mut best: Option<(f64, Threat)> = None;
    for other in view.others() {
        let r = me.to_local(other.state.position);
        if r.norm() > 80.0 {
            continue;
        }
        let vrel = (other.state.velocity() - me.velocity()).rotate(-me.heading);
        let vv = vrel.norm_sq();
        let tc = if vv > 1e-9 {
            (-r.dot(vrel) / vv).clamp(0.0, THREAT_HORIZON)
        } else {
            0.0
        };
        let at = r + vrel * tc;
        let sep = at.norm();
        // Conflict point expressed in ego coordinates at the current time.
        let conflict = me.to_local(other.state.position + other.state.velocity() * tc);
        if sep > THREAT_RADIUS || conflict.x < 0.0 {
            continue;
        }
        let key = tc;
        if best.as_ref().is_none_or(|(k, _)| key < *k) {
            best = Some((
                key,
                Threat {
                    ahead: conflict.x,
                    lateral: at.y,
                    separation: sep,
                },
            ));
        }
    }
    best.map(|(_, t)| t)
}

impl Controller for EgoController {
    fn act(&mut self, view: &WorldView<'_>) -> Action {
        let me = *view.own();
        let p = &self.params;
        let proj = self.path.project(me.position);
        let threat = nearest_threat(&me, view);

        let mut target_offset = 0.0;
        let mut target_speed = self.desired_speed;
        if let Some(gap) = leader_gap(&me, &self.path, proj.s, view) {
            // Speed from which a comfortable stop still ends `headway` behind the leader.
            let room = (gap - me.footprint.length - p.headway).max(0.0);
            target_speed = target_speed.min((2.0 * COMFORT_DECEL * room).sqrt());
        }
        let mut accel = (target_speed - me.speed).clamp(-COMFORT_DECEL, 2.0);
        if let Some(t) = &threat {
            let room = (t.ahead - me.footprint.length - p.headway).max(0.5);
            let required = me.speed * me.speed / (2.0 * room);
            accel = accel.min(-p.brake_gain * required);
            let side = if t.lateral >= 0.0 { -1.0 } else { 1.0 };
            target_offset = (side * p.swerve_gain * (THREAT_RADIUS - t.separation))
                .clamp(-MAX_SWERVE_OFFSET, MAX_SWERVE_OFFSET);
        }

        let path_heading = self.path.heading_at(proj.s);
        let heading_err = wrap_angle(path_heading - me.heading);
        let lateral_err = target_offset - proj.lateral;
        let wheel = p.heading_gain * heading_err
            + (p.lane_gain * lateral_err / (me.speed + 1.0)).atan();
        Action::new(wheel / MAX_WHEEL_ANGLE, Action::accel_command(accel))
    }
}
