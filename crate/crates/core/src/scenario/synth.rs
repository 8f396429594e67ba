//! Synthetic base scenarios.
//!
//! Each template builds a small lane map, puts the ego and the adversary on lane sequences
//! that merge or cross, and times their recorded motion so the recorded scenario is
//! collision free (the two agents reach the conflict point at least 1.5 s apart).
//! Background agents drive on lanes that never meet the ego or adversary paths.

use std::collections::BTreeMap;
use std::f64::consts::{FRAC_PI_2, PI};
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{AgentTrack, Footprint, Lane, MapInfo, Scenario, Trajectory, DT, HORIZON_STEPS};
use crate::error::{Error, Result};
use crate::geometry::{Polyline, Vec2};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Template {
    StraightMerge,
    TJunction,
    CurveFollow,
}

impl Template {
    pub const ALL: [Template; 3] = [
        Template::StraightMerge,
        Template::TJunction,
        Template::CurveFollow,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Template::StraightMerge => "straight-merge",
            Template::TJunction => "t-junction",
            Template::CurveFollow => "curve-follow",
        }
    }
}

impl fmt::Display for Template {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Template {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Template::ALL
            .into_iter()
            .find(|t| t.name() == s)
            .ok_or_else(|| Error::InvalidInput(format!("unknown template `{s}`")))
    }
}

const SHOULDER: f64 = 0.6;

fn q(x: f64) -> f64 {
    let r = (x * 1e6).round() / 1e6;
    if r == 0.0 {
        0.0
    } else {
        r
    }
}

fn qv(p: Vec2) -> Vec2 {
    Vec2::new(q(p.x), q(p.y))
}

fn lane(id: u32, width: f64, pts: Vec<Vec2>, successors: Vec<u32>) -> Lane {
    Lane {
        id,
        width: q(width),
        centerline: pts.into_iter().map(qv).collect(),
        successors,
    }
}

fn line(a: Vec2, b: Vec2, spacing: f64) -> Vec<Vec2> {
    let n = ((a.dist(b) / spacing).ceil() as usize).max(1);
    (0..=n).map(|i| a.lerp(b, i as f64 / n as f64)).collect()
}

fn arc(center: Vec2, radius: f64, from: f64, to: f64, spacing: f64) -> Vec<Vec2> {
    let n = (((to - from).abs() * radius / spacing).ceil() as usize).max(2);
    (0..=n)
        .map(|i| {
            let a = from + (to - from) * i as f64 / n as f64;
            center + Vec2::from_angle(a) * radius
        })
        .collect()
}

fn join(parts: &[&[Vec2]]) -> Vec<Vec2> {
    let mut out: Vec<Vec2> = Vec::new();
    for part in parts {
        for &p in part.iter() {
            if out.last().is_none_or(|q| q.dist(p) > 1e-6) {
                out.push(p);
            }
        }
    }
    out
}

/// Offsets a polyline to the left by `d` (negative: right) using averaged vertex normals.
fn offset(points: &[Vec2], d: f64) -> Vec<Vec2> {
    let n = points.len();
    (0..n)
        .map(|i| {
            let a = points[i.saturating_sub(1)];
            let b = points[(i + 1).min(n - 1)];
            let dir = (b - a).normalized();
            points[i] + dir.perp() * d
        })
        .collect()
}

fn close(mut poly: Vec<Vec2>) -> Vec<Vec2> {
    let first = poly[0];
    poly.push(first);
    poly.into_iter().map(qv).collect()
}

/// Speed samples for a whole scenario: a base speed with a slow, small oscillation.
fn speed_profile(rng: &mut ChaCha8Rng, base: f64) -> Vec<f64> {
    let amp = rng.gen_range(0.0..0.4);
    let period = rng.gen_range(6.0..12.0);
    let phase = rng.gen_range(0.0..2.0 * PI);
    (0..HORIZON_STEPS)
        .map(|k| base + amp * (2.0 * PI * k as f64 * DT / period + phase).sin())
        .collect()
}

/// Samples positions along `path`, placed so the agent is at arc length `s_at` at step
/// `step_at`.
fn drive(path: &Polyline, speeds: &[f64], s_at: f64, step_at: usize) -> Trajectory {
    let mut s = vec![0.0; speeds.len()];
    for k in 1..speeds.len() {
        s[k] = s[k - 1] + speeds[k - 1] * DT;
    }
    let shift = s_at - s[step_at.min(speeds.len() - 1)];
    let pts = s.iter().map(|&si| qv(path.point_at(si + shift))).collect();
    Trajectory::new(0, pts).expect("generated trajectories are finite")
}

struct Built {
    lanes: Vec<Lane>,
    edges: Vec<Vec<Vec2>>,
    tracks: Vec<Trajectory>,
}

/// Deterministic synthetic scenario: 1 s history + 8 s future at 10 Hz.
pub fn generate_synthetic(seed: u64, template: Template, n_background: usize) -> Scenario {
    let mut rng = rng::stream(seed, &[rng::tag(template.name()), n_background as u64]);
    let built = match template {
        Template::StraightMerge => straight_merge(&mut rng, n_background),
        Template::TJunction => t_junction(&mut rng, n_background),
        Template::CurveFollow => curve_follow(&mut rng, n_background),
    };
    let map = MapInfo::new(built.lanes, built.edges).expect("template maps are valid");
    let agents: BTreeMap<u32, AgentTrack> = built
        .tracks
        .into_iter()
        .enumerate()
        .map(|(i, trajectory)| {
            (
                i as u32,
                AgentTrack {
                    trajectory,
                    footprint: Footprint::default(),
                },
            )
        })
        .collect();
    let id = format!("{}-s{}-b{}", template.name(), seed, n_background);
    Scenario::new(id, agents, map, 0, 1).expect("generated scenarios are valid")
}

fn straight_merge(rng: &mut ChaCha8Rng, n_bg: usize) -> Built {
    let w = 3.6;
    let ramp_offset = 14.0;
    let taper = 110.0;
    let ramp: Vec<Vec2> = {
        let mut pts = line(Vec2::new(-220.0, -ramp_offset), Vec2::new(-taper, -ramp_offset), 4.0);
        let n = 60;
        for i in 1..=n {
            let x = -taper + taper * i as f64 / n as f64;
            let y = -0.5 * ramp_offset * (1.0 + (PI * (x + taper) / taper).cos());
            pts.push(Vec2::new(x, y));
        }
        pts
    };
    let main_in = line(Vec2::new(-220.0, 0.0), Vec2::new(0.0, 0.0), 10.0);
    let main_out = line(Vec2::new(0.0, 0.0), Vec2::new(260.0, 0.0), 10.0);
    let left = line(Vec2::new(-220.0, w), Vec2::new(260.0, w), 10.0);
    let lanes = vec![
        lane(1, w, main_in.clone(), vec![3]),
        lane(2, w, ramp.clone(), vec![3]),
        lane(3, w, main_out.clone(), vec![]),
        lane(4, w, left.clone(), vec![]),
    ];
    let half = w / 2.0 + SHOULDER;
    let mut outline = vec![Vec2::new(-230.0, w + half), Vec2::new(270.0, w + half)];
    outline.push(Vec2::new(270.0, -half));
    let ramp_right = offset(&ramp, -half);
    outline.extend(ramp_right.iter().rev().copied());
    outline.push(Vec2::new(-230.0, -ramp_offset - half));
    let edges = vec![close(outline)];

    let ego_path = Polyline::new(&join(&[&main_in, &main_out])).unwrap();
    let adv_path = Polyline::new(&join(&[&ramp, &main_out])).unwrap();
    let merge_ego = ego_path.project(Vec2::ZERO).s;
    let merge_adv = adv_path.project(Vec2::ZERO).s;

    let v_e = rng.gen_range(8.0..12.0);
    let t_e: f64 = rng.gen_range(4.0..6.0);
    let gap = rng.gen_range(1.8..2.8);
    let adv_first = rng.gen_bool(0.5);
    let (t_a, v_a) = if adv_first {
        (t_e - gap, v_e + rng.gen_range(0.0..2.0))
    } else {
        (t_e + gap, v_e - rng.gen_range(0.0..2.0))
    };
    let ego = drive(&ego_path, &speed_profile(rng, v_e), merge_ego, (t_e / DT) as usize);
    let adv = drive(&adv_path, &speed_profile(rng, v_a), merge_adv, (t_a / DT) as usize);

    let left_path = Polyline::new(&left).unwrap();
    let v_bg = rng.gen_range(9.0..12.0);
    let x0 = rng.gen_range(-80.0..-50.0);
    let mut tracks = vec![ego, adv];
    for i in 0..n_bg {
        let s = left_path.project(Vec2::new(x0 + 22.0 * i as f64, w)).s;
        tracks.push(drive(&left_path, &vec![v_bg; HORIZON_STEPS], s, 0));
    }
    Built {
        lanes,
        edges,
        tracks,
    }
}

fn t_junction(rng: &mut ChaCha8Rng, n_bg: usize) -> Built {
    let w = 4.0;
    let j = 10.0;
    let far = 160.0;
    let r_left = 12.0;
    let r_right = 8.0;
    let e_west = line(Vec2::new(-far, -2.0), Vec2::new(-j, -2.0), 10.0);
    let e_mid = line(Vec2::new(-j, -2.0), Vec2::new(j, -2.0), 2.0);
    let e_east = line(Vec2::new(j, -2.0), Vec2::new(far, -2.0), 10.0);
    let w_east = line(Vec2::new(far, 2.0), Vec2::new(j, 2.0), 10.0);
    let w_mid = line(Vec2::new(j, 2.0), Vec2::new(-j, 2.0), 2.0);
    let w_west = line(Vec2::new(-j, 2.0), Vec2::new(-far, 2.0), 10.0);
    let north = line(Vec2::new(2.0, -far), Vec2::new(2.0, -j), 10.0);
    let left_turn = arc(Vec2::new(-j, -j), r_left, 0.0, FRAC_PI_2, 0.5);
    let right_turn = arc(Vec2::new(j, -j), r_right, PI, FRAC_PI_2, 0.5);
    let south = line(Vec2::new(-2.0, -j), Vec2::new(-2.0, -far), 10.0);
    let lanes = vec![
        lane(10, w, e_west.clone(), vec![11]),
        lane(11, w, e_mid.clone(), vec![12]),
        lane(12, w, e_east.clone(), vec![]),
        lane(20, w, w_east.clone(), vec![21]),
        lane(21, w, w_mid.clone(), vec![22]),
        lane(22, w, w_west.clone(), vec![]),
        lane(30, w, north.clone(), vec![31, 32]),
        lane(31, w, left_turn.clone(), vec![22]),
        lane(32, w, right_turn.clone(), vec![12]),
        lane(33, w, south.clone(), vec![]),
    ];
    let e = w + SHOULDER;
    let c = 8.0;
    let edge_far = far + 10.0;
    let edges = vec![close(vec![
        Vec2::new(-edge_far, e),
        Vec2::new(edge_far, e),
        Vec2::new(edge_far, -e),
        Vec2::new(e + c, -e),
        Vec2::new(e, -e - c),
        Vec2::new(e, -edge_far),
        Vec2::new(-e, -edge_far),
        Vec2::new(-e, -e - c),
        Vec2::new(-e - c, -e),
        Vec2::new(-edge_far, -e),
    ])];

    let ego_path = Polyline::new(&join(&[&e_west, &e_mid, &e_east])).unwrap();
    let turn_left = rng.gen_bool(0.5);
    let adv_path = if turn_left {
        Polyline::new(&join(&[&north, &left_turn, &w_west])).unwrap()
    } else {
        Polyline::new(&join(&[&north, &right_turn, &e_east])).unwrap()
    };
    // conflict point: where the adversary path first comes within a lane of the ego lane
    let conflict_adv = {
        let mut s = 0.0;
        while s < adv_path.length() && adv_path.point_at(s).y < -2.0 - 0.5 * w {
            s += 0.25;
        }
        s
    };
    let conflict_pt = adv_path.point_at(conflict_adv);
    let conflict_ego = ego_path.project(conflict_pt).s;

    let v_e = rng.gen_range(8.0..12.0);
    let v_a = rng.gen_range(6.0..9.0);
    let t_e: f64 = rng.gen_range(4.0..6.0);
    let gap = rng.gen_range(1.6..2.6);
    // A right-turning adversary ends up in the ego lane at a lower speed, so it only
    // passes the conflict point after the ego; otherwise the ego would rear-end it.
    let adv_first = rng.gen_bool(0.5) && turn_left;
    let t_a = if adv_first { t_e - gap } else { t_e + gap };
    let ego = drive(&ego_path, &speed_profile(rng, v_e), conflict_ego, (t_e / DT) as usize);
    let adv = drive(&adv_path, &speed_profile(rng, v_a), conflict_adv, (t_a / DT) as usize);

    let west_path = Polyline::new(&w_west).unwrap();
    let south_path = Polyline::new(&south).unwrap();
    let v_bg = rng.gen_range(10.0..13.0);
    let mut tracks = vec![ego, adv];
    for i in 0..n_bg {
        let back = 30.0 + 25.0 * (i / 2) as f64;
        let (path, start) = if i % 2 == 0 {
            (&west_path, Vec2::new(-back, 2.0))
        } else {
            (&south_path, Vec2::new(-2.0, -back))
        };
        let s = path.project(start).s;
        tracks.push(drive(path, &vec![v_bg; HORIZON_STEPS], s, 0));
    }
    Built {
        lanes,
        edges,
        tracks,
    }
}

fn curve_follow(rng: &mut ChaCha8Rng, n_bg: usize) -> Built {
    let w = 3.6;
    let radius = rng.gen_range(45.0..80.0);
    let sweep = rng.gen_range(0.6 * FRAC_PI_2..FRAC_PI_2);
    let centerline = |d: f64| {
        let r = radius - d;
        let straight_in = line(Vec2::new(-160.0, d), Vec2::new(0.0, d), 4.0);
        let bend = arc(Vec2::new(0.0, radius), r, -FRAC_PI_2, -FRAC_PI_2 + sweep, 1.0);
        let exit_dir = Vec2::from_angle(sweep);
        let end = *bend.last().unwrap();
        let straight_out = line(end, end + exit_dir * 200.0, 4.0);
        join(&[&straight_in, &bend, &straight_out])
    };
    let right = centerline(0.0);
    let left = centerline(w);
    let lanes = vec![lane(40, w, right.clone(), vec![]), lane(41, w, left.clone(), vec![])];
    let half = w / 2.0 + SHOULDER;
    let mut outline = offset(&right, -half);
    outline.extend(offset(&left, half).into_iter().rev());
    let edges = vec![close(outline)];

    let path = Polyline::new(&right).unwrap();
    let v_e = rng.gen_range(8.0..12.0);
    let v_a = v_e + rng.gen_range(0.0..1.0);
    let gap = rng.gen_range(18.0..32.0);
    let s_e0 = 160.0 - v_e * rng.gen_range(2.0..4.0);
    let ego = drive(&path, &speed_profile(rng, v_e), s_e0, 0);
    let adv = drive(&path, &speed_profile(rng, v_a), s_e0 + gap, 0);

    let left_path = Polyline::new(&left).unwrap();
    let mut tracks = vec![ego, adv];
    let s0 = left_path.project(right[0]).s + s_e0 - rng.gen_range(10.0..30.0);
    for i in 0..n_bg {
        tracks.push(drive(&left_path, &vec![v_e; HORIZON_STEPS], s0 + 25.0 * i as f64, 0));
    }
    Built {
        lanes,
        edges,
        tracks,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn template_names_round_trip() {
        for t in Template::ALL {
            assert_eq!(t.name().parse::<Template>().unwrap(), t);
        }
        assert!("roundabout".parse::<Template>().is_err());
    }

    #[test]
    fn deterministic() {
        for t in Template::ALL {
            assert_eq!(generate_synthetic(3, t, 2), generate_synthetic(3, t, 2));
        }
        assert_ne!(
            generate_synthetic(3, Template::TJunction, 2),
            generate_synthetic(4, Template::TJunction, 2)
        );
    }

    #[test]
    fn horizon_and_agent_count() {
        let s = generate_synthetic(1, Template::TJunction, 3);
        assert_eq!(s.agents.len(), 5);
        assert_eq!(s.horizon(), HORIZON_STEPS);
    }

    #[test]
    fn recorded_scenarios_replay_cleanly() {
        use crate::sim::{run_episode, Outcome, PolicyBinding};
        for seed in 0..300 {
            for t in Template::ALL {
                let s = generate_synthetic(seed, t, 2);
                let r = run_episode(&s, &PolicyBinding::replay_all(&s), 0);
                assert_eq!(r.outcome, Outcome::Success, "{}", s.id);
            }
        }
    }
}
