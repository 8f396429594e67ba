//! Skill extraction from reactive demonstrations, a k-means skill codebook with benign
//! and adversarial observation-conditioned priors, and hierarchical skill execution.

pub mod adversary;

use std::collections::BTreeMap;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::candidates::{extract_subgoals, SubgoalList};
use crate::criticality::EgoHistory;
use crate::error::{Error, Result};
use crate::geometry::{distance_to_edges, wrap_angle, Polyline, Vec2};
use crate::rng;
use crate::scenario::{AgentId, MapInfo, Scenario, Trajectory};
use crate::sim::episode::{run_episode, RolloutRecord};
use crate::sim::kinematics::{Action, AgentState};
use crate::sim::policy::{AgentPolicy, PolicyBinding};
use crate::sim::IdmParams;

pub use adversary::{AdversarySpec, SkillAdversary};

pub const DEFAULT_HORIZON: usize = 10;
pub const DEFAULT_CLUSTERS: usize = 32;
pub const OBS_DIM: usize = 9;
pub const LIBRARY_FORMAT_VERSION: u32 = 1;
const KMEANS_MAX_ITERS: usize = 100;

/// Normalization scales, in order: speed, heading error to subgoal, distance to subgoal,
/// nearest-agent relative x, y, relative vx, vy, lateral lane offset, road-edge distance.
pub const OBS_SCALE: [f64; OBS_DIM] = [10.0, std::f64::consts::PI, 8.0, 20.0, 20.0, 10.0, 10.0, 2.0, 5.0];
/// Quantization cut points (raw units), two per dimension giving three bins.
pub const OBS_CUTS: [[f64; 2]; OBS_DIM] = [
    [4.0, 11.0],
    [-0.2, 0.2],
    [3.0, 7.0],
    [0.0, 20.0],
    [-2.5, 2.5],
    [-2.0, 2.0],
    [-1.0, 1.0],
    [-0.6, 0.6],
    [1.5, 4.0],
];
/// Relative position reported when no other agent is within range.
const NO_NEIGHBOR: Vec2 = Vec2::new(60.0, 0.0);
const NEIGHBOR_RANGE: f64 = 60.0;

/// Normalized observation vector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObsFeature(pub [f64; OBS_DIM]);

impl ObsFeature {
    pub fn from_raw(raw: [f64; OBS_DIM]) -> Self {
        let mut v = [0.0; OBS_DIM];
        for i in 0..OBS_DIM {
            v[i] = (raw[i] / OBS_SCALE[i]).clamp(-5.0, 5.0);
        }
        ObsFeature(v)
    }

    pub fn raw(&self) -> [f64; OBS_DIM] {
        let mut r = [0.0; OBS_DIM];
        for i in 0..OBS_DIM {
            r[i] = self.0[i] * OBS_SCALE[i];
        }
        r
    }

    pub fn dist_sq(&self, o: &ObsFeature) -> f64 {
        self.0.iter().zip(&o.0).map(|(a, b)| (a - b).powi(2)).sum()
    }

    /// Grid cell index (three bins per dimension, base-3 encoded).
    pub fn cell(&self) -> u32 {
        let raw = self.raw();
        raw.iter().enumerate().fold(0u32, |acc, (i, x)| {
            let b = if *x < OBS_CUTS[i][0] {
                0
            } else if *x < OBS_CUTS[i][1] {
                1
            } else {
                2
            };
            acc * 3 + b
        })
    }
}

/// An agent's route as navigation checkpoints.
#[derive(Debug, Clone)]
pub struct Route {
    path: Option<Polyline>,
    pub subgoals: SubgoalList,
}

impl Route {
    pub fn from_trajectory(t: &Trajectory) -> Self {
        Self {
            path: Polyline::new(t.points()),
            subgoals: extract_subgoals(t),
        }
    }

    /// First checkpoint more than 1 m ahead of the projection of `p`, or the final one.
    pub fn next_subgoal(&self, p: Vec2) -> Vec2 {
        let g = &self.subgoals;
        if let Some(path) = &self.path {
            let s = path.project(p).s;
            for (c, a) in g.checkpoints.iter().zip(&g.arc) {
                if *a > s + 1.0 {
                    return *c;
                }
            }
        }
        *g.checkpoints.last().unwrap()
    }
}

pub fn observe<'a>(
    me: &AgentState,
    others: impl Iterator<Item = &'a AgentState>,
    map: &MapInfo,
    route: &Route,
) -> ObsFeature {
    let goal = route.next_subgoal(me.position);
    let to_goal = goal - me.position;
    let heading_err = if to_goal.norm() > 1e-6 {
        wrap_angle(to_goal.angle() - me.heading)
    } else {
        0.0
    };
    let mut best: Option<(f64, &AgentState)> = None;
    for o in others {
        let d = o.position.dist(me.position);
        if d <= NEIGHBOR_RANGE && best.is_none_or(|(bd, _)| d < bd) {
            best = Some((d, o));
        }
    }
    let (rel, vel) = match best {
        Some((_, o)) => (
            me.to_local(o.position),
            (o.velocity() - me.velocity()).rotate(-me.heading),
        ),
        None => (NO_NEIGHBOR, Vec2::ZERO),
    };
    let (lat, _) = map.lateral_offset(me.position);
    let edge = distance_to_edges(me.position, map.road_edges());
    ObsFeature::from_raw([
        me.speed,
        heading_err,
        to_goal.norm(),
        rel.x,
        rel.y,
        vel.x,
        vel.y,
        lat,
        edge,
    ])
}

/// A demonstration roll-out with per-agent observations aligned to the record.
#[derive(Debug, Clone, PartialEq)]
pub struct DemoEpisode {
    pub record: RolloutRecord,
    pub obs: BTreeMap<AgentId, Vec<ObsFeature>>,
}

/// Demonstration IDM parameters: the default model with seed-driven jitter; about a third
/// of agents drive aggressively (short headway, small standstill gap).
pub fn demo_idm_params(traj: &Trajectory, rng: &mut ChaCha8Rng) -> IdmParams {
    let mut p = IdmParams::for_trajectory(traj);
    p.desired_speed *= rng.gen_range(0.85..1.25);
    if rng.gen_bool(0.35) {
        p.time_headway = rng.gen_range(0.3..0.8);
        p.min_gap = rng.gen_range(0.5..1.5);
        p.max_accel = rng.gen_range(2.0..3.5);
    } else {
        p.time_headway = rng.gen_range(1.0..1.8);
    }
    p
}

/// Per-step observations of every agent in a roll-out.
pub fn observe_record(s: &Scenario, r: &RolloutRecord) -> BTreeMap<AgentId, Vec<ObsFeature>> {
    let state = |id: AgentId, step: usize| -> Option<AgentState> {
        let (p, h, v) = r.agent(id)?.state_at(step)?;
        Some(AgentState {
            position: p,
            heading: h,
            speed: v,
            footprint: s.footprint(id),
        })
    };
    r.agents
        .iter()
        .map(|(&id, a)| {
            let route = Route::from_trajectory(s.trajectory(id));
            let obs = (0..a.len())
                .map(|i| {
                    let step = a.start_step + i;
                    let me = state(id, step).unwrap();
                    let others: Vec<AgentState> = r
                        .agents
                        .keys()
                        .filter(|&&o| o != id)
                        .filter_map(|&o| state(o, step))
                        .collect();
                    observe(&me, others.iter(), &s.map, &route)
                })
                .collect();
            (id, obs)
        })
        .collect()
}

/// Runs each scenario once with every agent on (jittered) IDM.
pub fn collect_demonstrations(scenarios: &[Scenario], seed: u64) -> Result<Vec<DemoEpisode>> {
    if scenarios.is_empty() {
        return Err(Error::InvalidInput("no scenarios for demonstrations".into()));
    }
    Ok(scenarios
        .par_iter()
        .enumerate()
        .map(|(k, s)| {
            let mut rng = rng::stream(seed, &[rng::tag("demo"), rng::tag(&s.id), k as u64]);
            let policies = s
                .agents
                .iter()
                .map(|(id, a)| (*id, AgentPolicy::Idm(demo_idm_params(&a.trajectory, &mut rng))))
                .collect();
            let record = run_episode(s, &PolicyBinding::from_map(policies), rng.gen());
            let obs = observe_record(s, &record);
            DemoEpisode { record, obs }
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Benign,
    Adversarial,
    Excluded,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentSource {
    pub scenario_id: String,
    pub agent_id: AgentId,
    pub start_step: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkillSegment {
    pub obs_start: ObsFeature,
    pub actions: Vec<Action>,
    pub label: Label,
    pub source: SegmentSource,
}

impl SkillSegment {
    pub fn flat(&self) -> Vec<f64> {
        self.actions.iter().flat_map(|a| [a.steer, a.accel]).collect()
    }
}

/// Window label: starts within 2H steps before an out-of-road onset are excluded; else
/// starts within 2H steps before the agent's own collision are adversarial.
pub fn label_window(start: usize, h: usize, collision: Option<usize>, offroad_onsets: &[usize]) -> Label {
    let within = |event: usize| start + 2 * h >= event && start < event;
    if offroad_onsets.iter().any(|&o| within(o)) {
        Label::Excluded
    } else if collision.is_some_and(within) {
        Label::Adversarial
    } else {
        Label::Benign
    }
}

/// Steps at which an agent goes from on-road (or nothing) to off-road.
pub fn offroad_onsets(start_step: usize, offroad: &[bool]) -> Vec<usize> {
    offroad
        .iter()
        .enumerate()
        .filter(|(i, &o)| o && (*i == 0 || !offroad[i - 1]))
        .map(|(i, _)| start_step + i)
        .collect()
}

/// Sliding windows of `h` actions at stride `h/2` over every agent trace.
pub fn segment_and_label(corpus: &[DemoEpisode], h: usize) -> Result<Vec<SkillSegment>> {
    if h == 0 {
        return Err(Error::InvalidInput("skill horizon must be at least 1".into()));
    }
    let stride = (h / 2).max(1);
    let mut out = Vec::new();
    for ep in corpus {
        for (id, a) in &ep.record.agents {
            let Some(obs) = ep.obs.get(id) else { continue };
            let onsets = offroad_onsets(a.start_step, &a.offroad);
            let mut i = 0;
            while i + h <= a.actions.len() && i < obs.len() {
                let start = a.start_step + i;
                out.push(SkillSegment {
                    obs_start: obs[i],
                    actions: a.actions[i..i + h]
                        .iter()
                        .map(|x| Action::new(x[0], x[1]))
                        .collect(),
                    label: label_window(start, h, a.collision_step, &onsets),
                    source: SegmentSource {
                        scenario_id: ep.record.scenario_id.clone(),
                        agent_id: *id,
                        start_step: start,
                    },
                });
                i += stride;
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PriorMode {
    Benign,
    Adversarial,
}

/// Cluster counts per observation cell plus marginal counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriorTable {
    pub cells: BTreeMap<u32, Vec<u32>>,
    pub marginal: Vec<u64>,
}

impl PriorTable {
    fn new(c: usize) -> Self {
        Self {
            cells: BTreeMap::new(),
            marginal: vec![0; c],
        }
    }

    fn add(&mut self, cell: u32, cluster: usize) {
        let c = self.marginal.len();
        self.cells.entry(cell).or_insert_with(|| vec![0; c])[cluster] += 1;
        self.marginal[cluster] += 1;
    }

    /// Add-one smoothed conditional at `cell`; cells without data fall back to the
    /// smoothed marginal.
    pub fn conditional(&self, cell: u32) -> Vec<f64> {
        let c = self.marginal.len() as f64;
        match self.cells.get(&cell) {
            Some(counts) => {
                let n: f64 = counts.iter().map(|&x| x as f64).sum();
                counts.iter().map(|&x| (x as f64 + 1.0) / (n + c)).collect()
            }
            None => {
                let n: f64 = self.marginal.iter().map(|&x| x as f64).sum();
                self.marginal.iter().map(|&x| (x as f64 + 1.0) / (n + c)).collect()
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkillLibrary {
    pub version: u32,
    pub horizon: usize,
    pub seed: u64,
    /// Flattened (steer, accel) sequences, one per cluster.
    pub centroids: Vec<Vec<f64>>,
    /// Non-excluded segments; `assignment[i]` is the cluster of `members[i]`.
    pub members: Vec<SkillSegment>,
    pub assignment: Vec<usize>,
    pub benign_prior: PriorTable,
    pub adversarial_prior: PriorTable,
    #[serde(skip)]
    by_cluster: Vec<Vec<usize>>,
}

impl SkillLibrary {
    pub fn clusters(&self) -> usize {
        self.centroids.len()
    }

    pub fn prior(&self, mode: PriorMode) -> &PriorTable {
        match mode {
            PriorMode::Benign => &self.benign_prior,
            PriorMode::Adversarial => &self.adversarial_prior,
        }
    }

    pub fn cluster_members(&self, c: usize) -> &[usize] {
        &self.by_cluster[c]
    }

    fn index(&mut self) {
        let mut by = vec![Vec::new(); self.centroids.len()];
        for (i, &c) in self.assignment.iter().enumerate() {
            by[c].push(i);
        }
        self.by_cluster = by;
    }

    pub fn validate(&self) -> Result<()> {
        let c = self.centroids.len();
        let ok = c > 0
            && self.horizon > 0
            && self.assignment.len() == self.members.len()
            && self.assignment.iter().all(|&a| a < c)
            && self.centroids.iter().all(|v| v.len() == 2 * self.horizon)
            && self.members.iter().all(|m| m.actions.len() == self.horizon)
            && self.benign_prior.marginal.len() == c
            && self.adversarial_prior.marginal.len() == c
            && self
                .benign_prior
                .cells
                .values()
                .chain(self.adversarial_prior.cells.values())
                .all(|v| v.len() == c);
        if !ok {
            return Err(Error::Validation("skill library is inconsistent".into()));
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        let text = serde_json::to_string(self).expect("library serializes");
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let de = &mut serde_json::Deserializer::from_str(&text);
        let mut lib: SkillLibrary = serde_path_to_error::deserialize(de)
            .map_err(|e| Error::parse(e.path().to_string(), e.inner().to_string()))?;
        if lib.version != LIBRARY_FORMAT_VERSION {
            return Err(Error::Config(format!(
                "unsupported skill library version {}",
                lib.version
            )));
        }
        lib.validate()?;
        lib.index();
        Ok(lib)
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum()
}

fn nearest_centroid(x: &[f64], centroids: &[Vec<f64>]) -> usize {
    let mut best = (f64::INFINITY, 0);
    for (k, c) in centroids.iter().enumerate() {
        let d = sq_dist(x, c);
        if d < best.0 {
            best = (d, k);
        }
    }
    best.1
}

/// Seeded k-means with k-means++ initialization; returns (centroids, assignment).
pub fn kmeans(data: &[Vec<f64>], k: usize, seed: u64) -> (Vec<Vec<f64>>, Vec<usize>) {
    let mut rng = rng::stream(seed, &[rng::tag("kmeans")]);
    let mut centroids = vec![data[rng.gen_range(0..data.len())].clone()];
    let mut d2: Vec<f64> = data.iter().map(|x| sq_dist(x, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut u = rng.gen::<f64>() * total;
            let mut idx = data.len() - 1;
            for (i, d) in d2.iter().enumerate() {
                if u < *d {
                    idx = i;
                    break;
                }
                u -= d;
            }
            idx
        } else {
            rng.gen_range(0..data.len())
        };
        centroids.push(data[pick].clone());
        for (i, x) in data.iter().enumerate() {
            d2[i] = d2[i].min(sq_dist(x, centroids.last().unwrap()));
        }
    }
    let dim = data[0].len();
    let mut assign: Vec<usize> = data.par_iter().map(|x| nearest_centroid(x, &centroids)).collect();
    for _ in 0..KMEANS_MAX_ITERS {
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (x, &a) in data.iter().zip(&assign) {
            counts[a] += 1;
            for (s, v) in sums[a].iter_mut().zip(x) {
                *s += v;
            }
        }
        for c in 0..k {
            if counts[c] > 0 {
                centroids[c] = sums[c].iter().map(|s| s / counts[c] as f64).collect();
            }
        }
        let next: Vec<usize> = data.par_iter().map(|x| nearest_centroid(x, &centroids)).collect();
        if next == assign {
            break;
        }
        assign = next;
    }
    (centroids, assign)
}

/// Builds the codebook over non-excluded segments and both priors.
pub fn build_library(segments: &[SkillSegment], c: usize, seed: u64) -> Result<SkillLibrary> {
    let members: Vec<SkillSegment> = segments
        .iter()
        .filter(|s| s.label != Label::Excluded)
        .cloned()
        .collect();
    if c == 0 {
        return Err(Error::InvalidInput("cluster count must be positive".into()));
    }
    if members.len() < c {
        return Err(Error::InvalidInput(format!(
            "{} usable segments for {c} clusters",
            members.len()
        )));
    }
    let horizon = members[0].actions.len();
    if members.iter().any(|m| m.actions.len() != horizon) {
        return Err(Error::InvalidInput("segments have different horizons".into()));
    }
    let data: Vec<Vec<f64>> = members.iter().map(|m| m.flat()).collect();
    let (centroids, assignment) = kmeans(&data, c, seed);
    let mut benign = PriorTable::new(c);
    let mut adversarial = PriorTable::new(c);
    for (m, &a) in members.iter().zip(&assignment) {
        match m.label {
            Label::Benign => benign.add(m.obs_start.cell(), a),
            Label::Adversarial => adversarial.add(m.obs_start.cell(), a),
            Label::Excluded => unreachable!(),
        }
    }
    let mut lib = SkillLibrary {
        version: LIBRARY_FORMAT_VERSION,
        horizon,
        seed,
        centroids,
        members,
        assignment,
        benign_prior: benign,
        adversarial_prior: adversarial,
        by_cluster: Vec::new(),
    };
    lib.index();
    Ok(lib)
}

/// Draws a cluster from the prior's conditional at the observation's cell, or takes the
/// most likely one (lowest index on ties) when `greedy`.
pub fn sample_skill<R: Rng>(lib: &SkillLibrary, obs: &ObsFeature, mode: PriorMode, rng: &mut R, greedy: bool) -> usize {
    let p = lib.prior(mode).conditional(obs.cell());
    if greedy {
        return crate::criticality::scorer::argmax_first(&p);
    }
    let mut u = rng.gen::<f64>();
    for (i, pi) in p.iter().enumerate() {
        if u < *pi {
            return i;
        }
        u -= pi;
    }
    p.len() - 1
}

pub fn select_skill(lib: &SkillLibrary, obs: &ObsFeature, mode: PriorMode, seed: u64, greedy: bool) -> usize {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    sample_skill(lib, obs, mode, &mut rng, greedy)
}

/// Actions of the cluster member whose starting observation is nearest to `obs`; the
/// centroid sequence for empty clusters.
pub fn execute_skill(lib: &SkillLibrary, cluster: usize, obs: &ObsFeature) -> Vec<Action> {
    let members = lib.cluster_members(cluster);
    let mut best: Option<(f64, usize)> = None;
    for &i in members {
        let d = lib.members[i].obs_start.dist_sq(obs);
        if best.is_none_or(|(bd, _)| d < bd) {
            best = Some((d, i));
        }
    }
    match best {
        Some((_, i)) => lib.members[i].actions.clone(),
        None => lib.centroids[cluster]
            .chunks(2)
            .map(|c| Action::new(c[0], c[1]))
            .collect(),
    }
}

/// Step of minimal mean distance between the candidate and the history ego roll-outs,
/// minus `offset` (clamped at 0). Roll-outs that ended early hold their last position.
pub fn compute_switch_step(candidate: &Trajectory, history: &EgoHistory, offset: usize) -> Result<usize> {
    if history.is_empty() {
        return Err(Error::InvalidInput("ego history is empty".into()));
    }
    let mut best = (f64::INFINITY, candidate.start_index());
    for t in candidate.start_index()..=candidate.end_index() {
        let c = candidate.at(t).unwrap();
        let mean = history
            .iter()
            .map(|h| {
                let p = h.at(t).unwrap_or(if t < h.start_index() { h.first() } else { h.last() });
                p.dist(c)
            })
            .sum::<f64>()
            / history.len() as f64;
        if mean < best.0 {
            best = (mean, t);
        }
    }
    Ok(best.1.saturating_sub(offset))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{generate_synthetic, Template};

    fn seg(actions: Vec<Action>, label: Label, obs: [f64; OBS_DIM]) -> SkillSegment {
        SkillSegment {
            obs_start: ObsFeature(obs),
            actions,
            label,
            source: SegmentSource {
                scenario_id: "t".into(),
                agent_id: 0,
                start_step: 0,
            },
        }
    }

    #[test]
    fn label_rule_windows() {
        for s in 0..80 {
            let l = label_window(s, 10, Some(50), &[]);
            let expected = if (30..=49).contains(&s) { Label::Adversarial } else { Label::Benign };
            assert_eq!(l, expected, "start {s}");
            let l = label_window(s, 10, None, &[40]);
            let expected = if (20..=39).contains(&s) { Label::Excluded } else { Label::Benign };
            assert_eq!(l, expected, "start {s}");
            // Exclusion wins where both windows apply.
            if (30..=39).contains(&s) {
                assert_eq!(label_window(s, 10, Some(50), &[40]), Label::Excluded);
            }
        }
    }

    #[test]
    fn onsets_detect_transitions() {
        assert_eq!(offroad_onsets(5, &[false, true, true, false, true]), vec![6, 9]);
        assert!(offroad_onsets(0, &[false; 4]).is_empty());
    }

    #[test]
    fn kmeans_separates_archetypes() {
        let mut segs = Vec::new();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for i in 0..200 {
            let brake = i % 2 == 0;
            let acts = (0..10)
                .map(|_| {
                    let n: f64 = rng.gen_range(-0.05..0.05);
                    if brake {
                        Action::new(n, -0.9 + n)
                    } else {
                        Action::new(n, 0.1 + n)
                    }
                })
                .collect();
            segs.push(seg(acts, if brake { Label::Adversarial } else { Label::Benign }, [0.0; OBS_DIM]));
        }
        let lib = build_library(&segs, 2, 3).unwrap();
        for c in 0..2 {
            let m = lib.cluster_members(c);
            let brakes = m.iter().filter(|&&i| lib.members[i].actions[0].accel < -0.5).count();
            let purity = brakes.max(m.len() - brakes) as f64 / m.len() as f64;
            assert!(purity >= 0.95);
        }
        // All adversarial segments share one cell: its conditional concentrates on the
        // brake cluster.
        let cell = ObsFeature([0.0; OBS_DIM]).cell();
        let p = lib.adversarial_prior.conditional(cell);
        let brake_cluster = lib.assignment[0];
        assert!(p[brake_cluster] >= 0.7);
        let total: f64 = p.iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn empty_adversarial_prior_is_uniform() {
        let segs: Vec<SkillSegment> = (0..10)
            .map(|i| seg(vec![Action::new(0.0, i as f64 / 10.0); 10], Label::Benign, [0.0; OBS_DIM]))
            .collect();
        let lib = build_library(&segs, 3, 0).unwrap();
        for x in lib.adversarial_prior.conditional(123) {
            assert!((x - 1.0 / 3.0).abs() < 1e-12);
        }
        assert!(build_library(&segs, 11, 0).is_err());
    }

    #[test]
    fn selection_modes() {
        let segs: Vec<SkillSegment> = (0..30)
            .map(|i| seg(vec![Action::new(0.0, (i % 3) as f64 / 3.0); 10], Label::Benign, [0.0; OBS_DIM]))
            .collect();
        let mut lib = build_library(&segs, 3, 0).unwrap();
        let cell = ObsFeature([0.0; OBS_DIM]).cell();
        // Degenerate prior: overwhelming mass on one cluster.
        lib.benign_prior.cells.insert(cell, vec![0, 0, 1_000_000_000]);
        let obs = ObsFeature([0.0; OBS_DIM]);
        assert_eq!(select_skill(&lib, &obs, PriorMode::Benign, 0, true), 2);
        // Sampling frequencies follow the conditional.
        lib.benign_prior.cells.insert(cell, vec![1, 4, 2]);
        let p = lib.benign_prior.conditional(cell);
        assert_eq!(crate::criticality::scorer::argmax_first(&p), 1);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut counts = [0usize; 3];
        for _ in 0..10_000 {
            counts[sample_skill(&lib, &obs, PriorMode::Benign, &mut rng, false)] += 1;
        }
        for k in 0..3 {
            assert!((counts[k] as f64 / 1e4 - p[k]).abs() < 0.02);
        }
    }

    #[test]
    fn execute_returns_nearest_member_or_centroid() {
        let mut segs = Vec::new();
        for i in 0..6 {
            let mut o = [0.0; OBS_DIM];
            o[0] = i as f64;
            segs.push(seg(vec![Action::new(0.0, i as f64 / 10.0); 10], Label::Benign, o));
        }
        let mut lib = build_library(&segs, 2, 0).unwrap();
        let c = lib.assignment[3];
        let out = execute_skill(&lib, c, &segs[3].obs_start);
        assert_eq!(out, segs[3].actions);
        // Empty cluster falls back to its centroid.
        lib.by_cluster[c].clear();
        let out = execute_skill(&lib, c, &segs[3].obs_start);
        assert_eq!(out.len(), 10);
        assert!((out[0].accel - lib.centroids[c][1]).abs() < 1e-12);
    }

    fn line(p0: Vec2, v: Vec2, start: usize, n: usize) -> Trajectory {
        Trajectory::new(start, (0..n).map(|i| p0 + v * i as f64).collect()).unwrap()
    }

    #[test]
    fn switch_step_examples() {
        // Candidate along y = 0; history ego crosses x = 42 at step 42 from above.
        let cand = line(Vec2::new(10.0, 0.0), Vec2::new(1.0, 0.0), 10, 81);
        let ego = Trajectory::new(
            0,
            (0..91).map(|t| Vec2::new(42.0, (t as f64 - 42.0) * 2.0)).collect(),
        )
        .unwrap();
        let mut h = EgoHistory::default();
        h.push(ego);
        assert_eq!(compute_switch_step(&cand, &h, 10).unwrap(), 32);
        let near = line(Vec2::new(0.0, 0.0), Vec2::new(1.0, 0.0), 0, 91);
        let far = Trajectory::new(0, (0..91).map(|t| Vec2::new(4.0, 50.0 + t as f64)).collect()).unwrap();
        let mut h = EgoHistory::default();
        h.push(far);
        assert_eq!(compute_switch_step(&near, &h, 10).unwrap(), 0);
        // Two roll-outs: mean distance minimal at t = 30.
        let e1 = Trajectory::new(0, (0..91).map(|t| Vec2::new(30.0, 30.0 - t as f64)).collect()).unwrap();
        let e2 = Trajectory::new(0, (0..91).map(|t| Vec2::new(30.0, t as f64 - 30.0)).collect()).unwrap();
        let cand = line(Vec2::ZERO, Vec2::new(1.0, 0.0), 0, 91);
        let mut h = EgoHistory::default();
        h.push(e1);
        h.push(e2);
        assert_eq!(compute_switch_step(&cand, &h, 10).unwrap(), 20);
    }

    #[test]
    fn demonstrations_are_deterministic_and_labelable() {
        let scenarios: Vec<Scenario> = (0..6)
            .map(|i| generate_synthetic(i, Template::ALL[i as usize % 3], 2))
            .collect();
        let a = collect_demonstrations(&scenarios, 4).unwrap();
        let b = collect_demonstrations(&scenarios, 4).unwrap();
        assert_eq!(a, b);
        let segs = segment_and_label(&a, 10).unwrap();
        assert!(segs.iter().all(|s| s.actions.len() == 10));
        assert!(!segs.is_empty());
    }

    #[test]
    fn library_round_trip() {
        let scenarios: Vec<Scenario> = (0..4).map(|i| generate_synthetic(i, Template::TJunction, 2)).collect();
        let demos = collect_demonstrations(&scenarios, 0).unwrap();
        let segs = segment_and_label(&demos, 10).unwrap();
        let lib = build_library(&segs, 8, 1).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("lib.json");
        lib.save(&p).unwrap();
        let back = SkillLibrary::load(&p).unwrap();
        assert_eq!(back.centroids, lib.centroids);
        assert_eq!(back.by_cluster, lib.by_cluster);
    }
}
