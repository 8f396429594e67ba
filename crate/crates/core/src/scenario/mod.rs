//! Scenario, trajectory and map types.
//!
//! A scenario is a set of recorded agent trajectories on a shared 10 Hz time base, a lane map
//! with drivable-region boundaries, and the ego / adversary role assignment.

mod io;
mod synth;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{wrap_angle, Polyline, Projection, RigidTransform, Vec2};

pub use io::{load_manifest, load_scenario, save_manifest, save_scenario, scenario_to_json};
pub use synth::{generate_synthetic, Template};

pub type AgentId = u32;

/// Simulation and recording time step in seconds.
pub const DT: f64 = 0.1;
/// Steps in a full scenario: 1 s history + 8 s future at 10 Hz, inclusive of step 0.
pub const HORIZON_STEPS: usize = 91;
/// Index of the last history step; candidate futures start here.
pub const HISTORY_END: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Footprint {
    pub length: f64,
    pub width: f64,
}

impl Default for Footprint {
    fn default() -> Self {
        Self {
            length: 4.5,
            width: 2.0,
        }
    }
}

impl Footprint {
    pub fn wheelbase(&self) -> f64 {
        0.6 * self.length
    }
}

/// Positions sampled every [`DT`] seconds, starting at absolute step `start_index`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    start_index: usize,
    points: Vec<Vec2>,
}

impl Trajectory {
    pub fn new(start_index: usize, points: Vec<Vec2>) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::Validation(format!(
                "trajectory needs at least 2 points, got {}",
                points.len()
            )));
        }
        if let Some(i) = points.iter().position(|p| !p.is_finite()) {
            return Err(Error::Validation(format!(
                "trajectory point {i} is not finite"
            )));
        }
        Ok(Self {
            start_index,
            points,
        })
    }

    pub fn start_index(&self) -> usize {
        self.start_index
    }

    pub fn points(&self) -> &[Vec2] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Absolute index of the last point.
    pub fn end_index(&self) -> usize {
        self.start_index + self.points.len() - 1
    }

    /// Position at absolute step `step`, if recorded.
    pub fn at(&self, step: usize) -> Option<Vec2> {
        step.checked_sub(self.start_index)
            .and_then(|i| self.points.get(i).copied())
    }

    pub fn first(&self) -> Vec2 {
        self.points[0]
    }

    pub fn last(&self) -> Vec2 {
        *self.points.last().unwrap()
    }

    pub fn arc_length(&self) -> f64 {
        self.points.windows(2).map(|w| w[0].dist(w[1])).sum()
    }

    /// Headings from consecutive displacements; the final step copies the previous one and
    /// stationary steps carry the last known heading.
    pub fn headings(&self) -> Vec<f64> {
        derive_headings(&self.points)
    }

    /// Speeds from consecutive displacements; the final step copies the previous one.
    pub fn speeds(&self) -> Vec<f64> {
        derive_speeds(&self.points)
    }

    pub fn peak_speed(&self) -> f64 {
        self.speeds().into_iter().fold(0.0, f64::max)
    }

    /// Keeps at most `n` points.
    pub fn truncated(&self, n: usize) -> Trajectory {
        let n = n.max(2).min(self.points.len());
        Trajectory {
            start_index: self.start_index,
            points: self.points[..n].to_vec(),
        }
    }

    pub fn transformed(&self, tf: &RigidTransform) -> Trajectory {
        Trajectory {
            start_index: self.start_index,
            points: self.points.iter().map(|&p| tf.apply(p)).collect(),
        }
    }

    /// Prefix of `self` up to (and including) `HISTORY_END`, followed by `future`, which
    /// must start at `HISTORY_END`.
    pub fn splice_future(&self, future: &Trajectory) -> Result<Trajectory> {
        if future.start_index < self.start_index {
            return Err(Error::InvalidInput(
                "future starts before the trajectory".into(),
            ));
        }
        let keep = future.start_index - self.start_index;
        if keep > self.points.len() {
            return Err(Error::InvalidInput(
                "gap between history and future".into(),
            ));
        }
        let mut points = self.points[..keep].to_vec();
        points.extend_from_slice(&future.points);
        Trajectory::new(self.start_index, points)
    }
}

pub(crate) fn derive_headings(points: &[Vec2]) -> Vec<f64> {
    let n = points.len();
    let mut out = vec![f64::NAN; n];
    let mut last: Option<f64> = None;
    for i in 0..n.saturating_sub(1) {
        let d = points[i + 1] - points[i];
        if d.norm() > 1e-6 {
            last = Some(d.angle());
        }
        if let Some(h) = last {
            out[i] = h;
        }
    }
    let first_valid = out.iter().copied().find(|h| h.is_finite()).unwrap_or(0.0);
    for h in out.iter_mut() {
        if h.is_finite() {
            break;
        }
        *h = first_valid;
    }
    if n >= 2 {
        out[n - 1] = out[n - 2];
    } else if n == 1 {
        out[0] = 0.0;
    }
    out
}

pub(crate) fn derive_speeds(points: &[Vec2]) -> Vec<f64> {
    let n = points.len();
    let mut out: Vec<f64> = points.windows(2).map(|w| w[0].dist(w[1]) / DT).collect();
    if n >= 2 {
        out.push(out[n - 2]);
    } else if n == 1 {
        out.push(0.0);
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lane {
    pub id: u32,
    pub width: f64,
    pub centerline: Vec<Vec2>,
    pub successors: Vec<u32>,
}

/// Lane graph plus drivable-region boundary polygons.
#[derive(Debug, Clone, PartialEq)]
pub struct MapInfo {
    lanes: Vec<Lane>,
    road_edges: Vec<Vec<Vec2>>,
    polylines: Vec<Polyline>,
}

impl MapInfo {
    pub fn new(lanes: Vec<Lane>, road_edges: Vec<Vec<Vec2>>) -> Result<Self> {
        let mut polylines = Vec::with_capacity(lanes.len());
        for lane in &lanes {
            if lane.centerline.len() < 2 {
                return Err(Error::Validation(format!(
                    "lane {} has fewer than 2 centerline points",
                    lane.id
                )));
            }
            if !(lane.width > 0.0) {
                return Err(Error::Validation(format!(
                    "lane {} has non-positive width",
                    lane.id
                )));
            }
            if lane.centerline.iter().any(|p| !p.is_finite()) {
                return Err(Error::Validation(format!(
                    "lane {} has a non-finite point",
                    lane.id
                )));
            }
            let pl = Polyline::new(&lane.centerline).ok_or_else(|| {
                Error::Validation(format!("lane {} centerline is degenerate", lane.id))
            })?;
            polylines.push(pl);
        }
        for lane in &lanes {
            for s in &lane.successors {
                if !lanes.iter().any(|l| l.id == *s) {
                    return Err(Error::Validation(format!(
                        "lane {} lists unknown successor {s}",
                        lane.id
                    )));
                }
            }
        }
        if road_edges.is_empty() {
            return Err(Error::Config("map has no road edges".into()));
        }
        for (i, edge) in road_edges.iter().enumerate() {
            let closed = edge.len() >= 4 && edge[0].dist(*edge.last().unwrap()) < 1e-9;
            if !closed {
                return Err(Error::Config(format!(
                    "road edge {i} does not form a closed region"
                )));
            }
            if edge.iter().any(|p| !p.is_finite()) {
                return Err(Error::Validation(format!(
                    "road edge {i} has a non-finite point"
                )));
            }
        }
        Ok(Self {
            lanes,
            road_edges,
            polylines,
        })
    }

    pub fn lanes(&self) -> &[Lane] {
        &self.lanes
    }

    pub fn road_edges(&self) -> &[Vec<Vec2>] {
        &self.road_edges
    }

    pub fn lane_index(&self, id: u32) -> Option<usize> {
        self.lanes.iter().position(|l| l.id == id)
    }

    pub fn lane_polyline(&self, index: usize) -> &Polyline {
        &self.polylines[index]
    }

    pub fn predecessors(&self, id: u32) -> Vec<u32> {
        self.lanes
            .iter()
            .filter(|l| l.successors.contains(&id))
            .map(|l| l.id)
            .collect()
    }

    /// Lane whose centerline is nearest to `p` among those within half a width (+`slack`)
    /// laterally, inside the lane's extent, and aligned with `heading` within `max_angle`.
    /// Ties resolve to the lower lane index.
    pub fn nearest_lane(
        &self,
        p: Vec2,
        heading: f64,
        slack: f64,
        max_angle: f64,
    ) -> Option<(usize, Projection)> {
        let mut best: Option<(usize, Projection)> = None;
        for (i, (lane, pl)) in self.lanes.iter().zip(&self.polylines).enumerate() {
            let pr = pl.project(p);
            if pr.s < -0.5 || pr.s > pl.length() + 0.5 {
                continue;
            }
            if pr.lateral.abs() > lane.width / 2.0 + slack {
                continue;
            }
            if wrap_angle(pl.heading_at(pr.s) - heading).abs() > max_angle {
                continue;
            }
            if best
                .as_ref()
                .is_none_or(|(_, b)| pr.lateral.abs() < b.lateral.abs() - 1e-9)
            {
                best = Some((i, pr));
            }
        }
        best
    }

    /// Signed offset to the nearest lane centerline (any direction), and that lane's width.
    pub fn lateral_offset(&self, p: Vec2) -> (f64, f64) {
        let mut best = (f64::INFINITY, 3.6);
        for (lane, pl) in self.lanes.iter().zip(&self.polylines) {
            let pr = pl.project(p);
            let s = pr.s.clamp(0.0, pl.length());
            let d = pl.point_at(s).dist(p);
            if d < best.0.abs() {
                best = (if pr.lateral < 0.0 { -d } else { d }, lane.width);
            }
        }
        best
    }

    /// Ordered, de-duplicated list of lane ids visited by `points`.
    pub fn lane_sequence(&self, points: &[Vec2]) -> Vec<u32> {
        let headings = derive_headings(points);
        let mut seq: Vec<u32> = Vec::new();
        for (p, h) in points.iter().zip(&headings) {
            if let Some((i, _)) = self.nearest_lane(*p, *h, 0.5, std::f64::consts::FRAC_PI_3) {
                let id = self.lanes[i].id;
                if seq.last() != Some(&id) {
                    seq.push(id);
                }
            }
        }
        seq
    }

    pub fn is_drivable(&self, p: Vec2) -> bool {
        crate::geometry::point_in_polygons(p, &self.road_edges)
    }

    pub fn transformed(&self, tf: &RigidTransform) -> MapInfo {
        let lanes = self
            .lanes
            .iter()
            .map(|l| Lane {
                centerline: l.centerline.iter().map(|&p| tf.apply(p)).collect(),
                ..l.clone()
            })
            .collect();
        let edges = self
            .road_edges
            .iter()
            .map(|e| e.iter().map(|&p| tf.apply(p)).collect())
            .collect();
        MapInfo::new(lanes, edges).expect("rigid transform preserves map validity")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgentTrack {
    pub trajectory: Trajectory,
    pub footprint: Footprint,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub id: String,
    pub agents: BTreeMap<AgentId, AgentTrack>,
    pub map: MapInfo,
    pub ego_id: AgentId,
    pub adv_id: AgentId,
}

impl Scenario {
    pub fn new(
        id: impl Into<String>,
        agents: BTreeMap<AgentId, AgentTrack>,
        map: MapInfo,
        ego_id: AgentId,
        adv_id: AgentId,
    ) -> Result<Self> {
        let s = Self {
            id: id.into(),
            agents,
            map,
            ego_id,
            adv_id,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.ego_id == self.adv_id {
            return Err(Error::Validation("ego_id equals adv_id".into()));
        }
        for (role, id) in [("ego_id", self.ego_id), ("adv_id", self.adv_id)] {
            if !self.agents.contains_key(&id) {
                return Err(Error::Validation(format!(
                    "{role} {id} is not among the scenario agents"
                )));
            }
        }
        for (id, a) in &self.agents {
            if a.trajectory.len() < 2 {
                return Err(Error::Validation(format!("agent {id} has < 2 points")));
            }
            if a.trajectory.points().iter().any(|p| !p.is_finite()) {
                return Err(Error::Validation(format!(
                    "agent {id} has a non-finite coordinate"
                )));
            }
            if !(a.footprint.length > 0.0 && a.footprint.width > 0.0) {
                return Err(Error::Validation(format!(
                    "agent {id} has a non-positive footprint"
                )));
            }
        }
        Ok(())
    }

    /// Number of recorded steps (one past the largest end index).
    pub fn horizon(&self) -> usize {
        self.agents
            .values()
            .map(|a| a.trajectory.end_index() + 1)
            .max()
            .unwrap_or(0)
    }

    pub fn trajectory(&self, id: AgentId) -> &Trajectory {
        &self.agents[&id].trajectory
    }

    pub fn footprint(&self, id: AgentId) -> Footprint {
        self.agents[&id].footprint
    }

    pub fn ego(&self) -> &Trajectory {
        self.trajectory(self.ego_id)
    }

    pub fn adversary(&self) -> &Trajectory {
        self.trajectory(self.adv_id)
    }

    pub fn agent_ids(&self) -> impl Iterator<Item = AgentId> + '_ {
        self.agents.keys().copied()
    }

    pub fn transformed(&self, tf: &RigidTransform) -> Scenario {
        Scenario {
            id: self.id.clone(),
            agents: self
                .agents
                .iter()
                .map(|(id, a)| {
                    (
                        *id,
                        AgentTrack {
                            trajectory: a.trajectory.transformed(tf),
                            footprint: a.footprint,
                        },
                    )
                })
                .collect(),
            map: self.map.transformed(tf),
            ego_id: self.ego_id,
            adv_id: self.adv_id,
        }
    }
}
