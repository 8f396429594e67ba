//! Lattice sampler for candidate adversary futures, and checkpoint extraction.
//!
//! Candidates are produced by driving the kinematic model along lattice paths (lane-graph
//! routes and Hermite blends onto neighbouring lanes) under a set of speed profiles, so
//! every candidate is dynamically feasible by construction.

use std::io::Write;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{hermite, wrap_angle, Polyline, Vec2};
use crate::rng;
use crate::scenario::{Footprint, Scenario, Trajectory, DT, HISTORY_END, HORIZON_STEPS};
use crate::sim::control::{lookahead, pure_pursuit};
use crate::sim::kinematics::{step_kinematics, Action, AgentState, MAX_WHEEL_ANGLE};

pub const NUM_CANDIDATES: usize = 32;
/// Future steps per candidate (8 s).
pub const FUTURE_STEPS: usize = HORIZON_STEPS - HISTORY_END - 1;
pub const MAX_CANDIDATE_SPEED: f64 = 30.0;
pub const SUBGOAL_SPACING: f64 = 8.0;

/// Fraction of the steering range the sampler may use.
const STEER_LIMIT: f64 = 0.9;
/// Two candidates are distinct when some time-aligned pair of points differs by more.
const DISTINCT_TOL: f64 = 2.0;
const BLEND_SECONDS: f64 = 3.0;
const MAX_ROUTE_DEPTH: usize = 6;

#[derive(Debug, Clone, PartialEq)]
pub struct CandidateSet {
    pub scenario_id: String,
    pub seed: u64,
    /// Each candidate starts at `HISTORY_END` with the adversary's position there,
    /// followed by `FUTURE_STEPS` future points.
    pub candidates: Vec<Trajectory>,
}

impl CandidateSet {
    pub fn len(&self) -> usize {
        self.candidates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.candidates.is_empty()
    }

    pub fn get(&self, i: usize) -> &Trajectory {
        &self.candidates[i]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SpeedProfile {
    HardBrake,
    Decel,
    Hold,
    Accel,
    StrongAccel,
}

impl SpeedProfile {
    pub const ALL: [SpeedProfile; 5] = [
        SpeedProfile::HardBrake,
        SpeedProfile::Decel,
        SpeedProfile::Hold,
        SpeedProfile::Accel,
        SpeedProfile::StrongAccel,
    ];

    pub fn accel(self) -> f64 {
        match self {
            SpeedProfile::HardBrake => -5.0,
            SpeedProfile::Decel => -2.0,
            SpeedProfile::Hold => 0.0,
            SpeedProfile::Accel => 1.0,
            SpeedProfile::StrongAccel => 2.0,
        }
    }
}

/// Longitudinal plan: hold speed for `delay` steps, then apply `accel` (m/s²).
#[derive(Debug, Clone, Copy)]
struct Plan {
    accel: f64,
    delay: usize,
}

/// Adversary state at the end of the history window.
pub fn anchor_state(s: &Scenario) -> Result<AgentState> {
    let adv = s.adversary();
    let i = HISTORY_END
        .checked_sub(adv.start_index())
        .filter(|&i| i < adv.len())
        .ok_or_else(|| {
            Error::InvalidInput(format!(
                "adversary history does not cover step {HISTORY_END}"
            ))
        })?;
    Ok(AgentState {
        position: adv.points()[i],
        heading: adv.headings()[i],
        speed: adv.speeds()[i],
        footprint: s.footprint(s.adv_id),
    })
}

/// Drives the kinematic model along `path` for `FUTURE_STEPS` steps.
fn roll_out(anchor: &AgentState, path: &Polyline, plan: Plan) -> Vec<Vec2> {
    let mut state = *anchor;
    let mut pts = Vec::with_capacity(FUTURE_STEPS + 1);
    pts.push(state.position);
    for k in 0..FUTURE_STEPS {
        let mut a = if k < plan.delay { 0.0 } else { plan.accel };
        a = a.min((MAX_CANDIDATE_SPEED - state.speed) / DT);
        let s = path.project(state.position).s;
        let steer = pure_pursuit(&state, path.point_at(s + lookahead(state.speed)))
            .clamp(-STEER_LIMIT, STEER_LIMIT);
        state = step_kinematics(&state, &Action::new(steer, Action::accel_command(a)), DT);
        pts.push(state.position);
    }
    pts
}

/// Concatenated centerline points of a lane route, starting from arc length `from` on
/// the first lane.
fn route_points(s: &Scenario, route: &[usize], from: f64) -> Vec<Vec2> {
    let mut pts: Vec<Vec2> = Vec::new();
    for (k, &li) in route.iter().enumerate() {
        let pl = s.map.lane_polyline(li);
        let lane_pts: Vec<Vec2> = if k == 0 {
            std::iter::once(pl.point_at(from.clamp(0.0, pl.length())))
                .chain(
                    pl.points()
                        .iter()
                        .zip(cumulative(pl.points()))
                        .filter(|(_, c)| *c > from + 1e-6)
                        .map(|(p, _)| *p),
                )
                .collect()
        } else {
            pl.points().to_vec()
        };
        for p in lane_pts {
            if pts.last().is_none_or(|q| q.dist(p) > 1e-3) {
                pts.push(p);
            }
        }
    }
    pts
}

fn cumulative(points: &[Vec2]) -> Vec<f64> {
    let mut c = Vec::with_capacity(points.len());
    let mut acc = 0.0;
    for (i, p) in points.iter().enumerate() {
        if i > 0 {
            acc += points[i - 1].dist(*p);
        }
        c.push(acc);
    }
    c
}

/// Depth-first enumeration of successor routes from lane `start` until `needed` meters
/// past `from` are covered (or the graph ends).
fn enumerate_routes(s: &Scenario, start: usize, from: f64, needed: f64) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut stack = vec![(vec![start], s.map.lane_polyline(start).length() - from)];
    while let Some((route, covered)) = stack.pop() {
        let last = *route.last().unwrap();
        let succ: Vec<usize> = s.map.lanes()[last]
            .successors
            .iter()
            .filter_map(|id| s.map.lane_index(*id))
            .filter(|i| !route.contains(i))
            .collect();
        if covered >= needed || succ.is_empty() || route.len() >= MAX_ROUTE_DEPTH {
            out.push(route);
            continue;
        }
        // Reverse push keeps the output in successor-list order.
        for &n in succ.iter().rev() {
            let mut r = route.clone();
            r.push(n);
            stack.push((r, covered + s.map.lane_polyline(n).length()));
        }
    }
    out
}

fn arc_path(anchor: &AgentState, curvature: f64, length: f64) -> Vec<Vec2> {
    let n = 60;
    (0..=n)
        .map(|i| {
            let s = length * i as f64 / n as f64;
            let local = if curvature.abs() < 1e-9 {
                Vec2::new(s, 0.0)
            } else {
                let th = s * curvature;
                Vec2::new(th.sin() / curvature, (1.0 - th.cos()) / curvature)
            };
            anchor.position + local.rotate(anchor.heading)
        })
        .collect()
}

/// Shifts a path sideways by `offset`, ramping in over the first 20 m.
fn offset_path(path: &Polyline, offset: f64) -> Option<Polyline> {
    let pts = path.points();
    let cum = cumulative(pts);
    let shifted: Vec<Vec2> = pts
        .iter()
        .zip(&cum)
        .map(|(p, c)| *p + path.tangent_at(*c).perp() * (offset * (c / 20.0).min(1.0)))
        .collect();
    Polyline::new(&shifted)
}

struct LatticePath {
    path: Polyline,
    targets_ego: bool,
}

fn lattice_paths(s: &Scenario, anchor: &AgentState) -> Vec<LatticePath> {
    let needed = anchor.speed * 8.0 + 64.0 + 20.0;
    let ego_lanes = s.map.lane_sequence(s.ego().points());
    let mut raw: Vec<Vec<Vec2>> = Vec::new();
    let mut route_lanes: Vec<Vec<u32>> = Vec::new();

    let current = s
        .map
        .nearest_lane(anchor.position, anchor.heading, 1.0, std::f64::consts::FRAC_PI_4);
    if let Some((li, pr)) = current {
        for route in enumerate_routes(s, li, pr.s, needed) {
            let mut pts = vec![anchor.position];
            pts.extend(route_points(s, &route, pr.s + lookahead(anchor.speed).min(6.0)));
            raw.push(pts);
            route_lanes.push(route.iter().map(|&i| s.map.lanes()[i].id).collect());
        }
        // Blends onto aligned neighbouring lanes.
        let blend = (BLEND_SECONDS * anchor.speed).max(12.0);
        for (j, lane) in s.map.lanes().iter().enumerate() {
            if j == li {
                continue;
            }
            let pl = s.map.lane_polyline(j);
            let pj = pl.project(anchor.position);
            if pj.s < -2.0 || pj.s > pl.length() {
                continue;
            }
            let lat = pj.lateral.abs();
            if !(0.5..=8.0).contains(&lat) {
                continue;
            }
            if wrap_angle(pl.heading_at(pj.s) - anchor.heading).abs() > std::f64::consts::FRAC_PI_6 {
                continue;
            }
            for route in enumerate_routes(s, j, pj.s.max(0.0), needed) {
                let rp = route_points(s, &route, pj.s.max(0.0));
                let Some(rpl) = Polyline::new(&rp) else { continue };
                let target = rpl.point_at(blend);
                let t1 = rpl.tangent_at(blend);
                let mut pts = hermite(
                    anchor.position,
                    anchor.forward() * blend,
                    target,
                    t1 * blend,
                    24,
                );
                let cum = cumulative(&rp);
                pts.extend(rp.iter().zip(&cum).filter(|(_, c)| **c > blend + 0.5).map(|(p, _)| *p));
                raw.push(pts);
                let mut ids = vec![lane.id];
                ids.extend(route.iter().skip(1).map(|&i| s.map.lanes()[i].id));
                route_lanes.push(ids);
            }
        }
    } else {
        let length = needed;
        for k in [0.0, 0.01, -0.01, 0.03, -0.03, 0.06, -0.06] {
            raw.push(arc_path(anchor, k, length));
            route_lanes.push(Vec::new());
        }
    }

    let mut out: Vec<LatticePath> = raw
        .into_iter()
        .zip(route_lanes)
        .filter_map(|(pts, lanes)| {
            let pl = extend_to(&pts, needed)?;
            Some(LatticePath {
                path: pl,
                targets_ego: lanes.iter().any(|l| ego_lanes.contains(l)),
            })
        })
        .collect();
    // Paths that reach the ego's lanes come first; stable sort keeps generation order.
    out.sort_by_key(|p| !p.targets_ego);
    out
}

/// Polyline through `pts`, extended straight so that it is at least `needed` long.
fn extend_to(pts: &[Vec2], needed: f64) -> Option<Polyline> {
    let pl = Polyline::new(pts)?;
    if pl.length() >= needed {
        return Some(pl);
    }
    let mut p = pl.points().to_vec();
    p.push(pl.point_at(pl.length()) + pl.tangent_at(pl.length()) * (needed - pl.length() + 10.0));
    Polyline::new(&p)
}

fn is_distinct(existing: &[Vec<Vec2>], pts: &[Vec2], tol: f64) -> bool {
    existing.iter().all(|e| {
        e.iter()
            .zip(pts)
            .map(|(a, b)| a.dist(*b))
            .fold(0.0, f64::max)
            > tol
    })
}

/// Samples exactly `NUM_CANDIDATES` distinct feasible futures for the adversary.
pub fn sample_candidates(s: &Scenario, seed: u64) -> Result<CandidateSet> {
    let anchor = anchor_state(s)?;
    let mut paths = lattice_paths(s, &anchor);
    if paths.is_empty() {
        paths.push(LatticePath {
            path: extend_to(&arc_path(&anchor, 0.0, 100.0), 100.0).unwrap(),
            targets_ego: false,
        });
    }

    let mut accepted: Vec<Vec<Vec2>> = Vec::new();
    'base: for lp in &paths {
        for prof in SpeedProfile::ALL {
            let pts = roll_out(&anchor, &lp.path, Plan { accel: prof.accel(), delay: 0 });
            if is_distinct(&accepted, &pts, DISTINCT_TOL) {
                accepted.push(pts);
                if accepted.len() == NUM_CANDIDATES {
                    break 'base;
                }
            }
        }
    }

    let mut rng = rng::stream(seed, &[rng::tag("candidates"), rng::tag(&s.id)]);
    let mut attempts = 0usize;
    let mut tol = DISTINCT_TOL;
    while accepted.len() < NUM_CANDIDATES {
        attempts += 1;
        if attempts.is_multiple_of(2000) {
            // Degenerate geometry (e.g. no room to move): relax the distinctness margin.
            tol *= 0.5;
        }
        let lp = &paths[rng.gen_range(0..paths.len())];
        let base = SpeedProfile::ALL[rng.gen_range(0..SpeedProfile::ALL.len())].accel();
        let plan = Plan {
            accel: (base + rng.gen_range(-0.8..0.8)).clamp(-6.0, 3.0),
            delay: rng.gen_range(0..30),
        };
        let offset = rng.gen_range(-1.0..1.0);
        let path = offset_path(&lp.path, offset).unwrap_or_else(|| lp.path.clone());
        let pts = roll_out(&anchor, &path, plan);
        if is_distinct(&accepted, &pts, tol) {
            accepted.push(pts);
        }
    }

    let candidates = accepted
        .into_iter()
        .map(|pts| Trajectory::new(HISTORY_END, pts))
        .collect::<Result<Vec<_>>>()?;
    Ok(CandidateSet {
        scenario_id: s.id.clone(),
        seed,
        candidates,
    })
}

/// Maximum per-step implied curvature of a point sequence: turning angle between
/// successive displacements over their mean length (steps under 1 mm are skipped).
pub fn max_implied_curvature(points: &[Vec2]) -> f64 {
    let segs: Vec<Vec2> = points
        .windows(2)
        .map(|w| w[1] - w[0])
        .filter(|d| d.norm() > 1e-3)
        .collect();
    segs.windows(2)
        .map(|w| {
            let turn = wrap_angle(w[1].angle() - w[0].angle()).abs();
            turn / ((w[0].norm() + w[1].norm()) / 2.0)
        })
        .fold(0.0, f64::max)
}

/// Curvature bound implied by the steering limit.
pub fn curvature_limit(footprint: &Footprint) -> f64 {
    MAX_WHEEL_ANGLE.tan() / footprint.wheelbase()
}

/// Ordered navigation checkpoints along a trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubgoalList {
    pub checkpoints: Vec<Vec2>,
    /// Arc length of each checkpoint along the source trajectory.
    pub arc: Vec<f64>,
}

impl SubgoalList {
    pub fn len(&self) -> usize {
        self.checkpoints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.checkpoints.is_empty()
    }
}

/// Checkpoints every `SUBGOAL_SPACING` meters of arc length, plus the final point.
pub fn extract_subgoals(traj: &Trajectory) -> SubgoalList {
    let pts = traj.points();
    let total = traj.arc_length();
    let mut checkpoints = Vec::new();
    let mut arc = Vec::new();
    let mut next = SUBGOAL_SPACING;
    let mut acc = 0.0;
    for w in pts.windows(2) {
        let d = w[0].dist(w[1]);
        while d > 0.0 && next <= acc + d && next < total - 1e-9 {
            checkpoints.push(w[0].lerp(w[1], (next - acc) / d));
            arc.push(next);
            next += SUBGOAL_SPACING;
        }
        acc += d;
    }
    checkpoints.push(traj.last());
    arc.push(total);
    SubgoalList { checkpoints, arc }
}

#[derive(Serialize)]
struct CandidateLine<'a> {
    scenario_id: &'a str,
    seed: u64,
    candidate_index: usize,
    points: &'a [Vec2],
}

/// Writes one JSON line per candidate.
pub fn write_candidates(path: &Path, sets: &[CandidateSet]) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = std::io::BufWriter::new(file);
    for set in sets {
        for (i, c) in set.candidates.iter().enumerate() {
            let line = CandidateLine {
                scenario_id: &set.scenario_id,
                seed: set.seed,
                candidate_index: i,
                points: c.points(),
            };
            let text = serde_json::to_string(&line).expect("candidate line serializes");
            writeln!(out, "{text}").map_err(|e| Error::io(path, e))?;
        }
    }
    out.flush().map_err(|e| Error::io(path, e))
}
