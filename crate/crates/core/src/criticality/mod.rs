//! Criticality measures, the episode-based oracle scorer, and candidate ranking rules.

pub mod scorer;

use std::collections::VecDeque;
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::candidates::{sample_candidates, CandidateSet};
use crate::error::{Error, Result};
use crate::geometry::Vec2;
use crate::scenario::{Footprint, Scenario, Trajectory};
use crate::sim::collision::detect_collision;
use crate::sim::episode::{run_episode, RolloutRecord};
use crate::sim::kinematics::AgentState;
use crate::sim::policy::{AgentPolicy, PolicyBinding};
use crate::sim::IdmParams;

pub use scorer::{predict_score, rank_learned, train_scorer, ScorerConfig, ScorerModel, TrainReport};

/// Distance scale of both criticality measures (m).
pub const DEFAULT_B: f64 = 8.0;
/// Ego roll-outs kept per base scenario.
pub const DEFAULT_K: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CritScore {
    pub f_coll: f64,
    pub f_diff: f64,
}

impl CritScore {
    pub fn sum(&self) -> f64 {
        self.f_coll + self.f_diff
    }
}

/// Positions of two trajectories over their common step window.
fn aligned<'a>(a: &'a Trajectory, b: &'a Trajectory) -> Result<impl Iterator<Item = (Vec2, Vec2)> + 'a> {
    let lo = a.start_index().max(b.start_index());
    let hi = a.end_index().min(b.end_index());
    if lo > hi {
        return Err(Error::InvalidInput(
            "trajectories do not overlap in time".into(),
        ));
    }
    Ok((lo..=hi).map(move |t| (a.at(t).unwrap(), b.at(t).unwrap())))
}

/// Collision closeness: exp(-min_t d(ego_t, adv_t) / b).
pub fn f_coll(ego: &Trajectory, adv: &Trajectory, b: f64) -> Result<f64> {
    let min = aligned(ego, adv)?
        .map(|(p, q)| p.dist(q))
        .fold(f64::INFINITY, f64::min);
    Ok((-min / b).exp())
}

/// Ego behavior difference: 1 - exp(-sum_t d(prev_t, curr_t) / b).
pub fn f_diff(ego_prev: &Trajectory, ego_curr: &Trajectory, b: f64) -> Result<f64> {
    let total: f64 = aligned(ego_prev, ego_curr)?.map(|(p, q)| p.dist(q)).sum();
    Ok(1.0 - (-total / b).exp())
}

/// The most recent ego roll-outs for one base scenario, newest last.
#[derive(Debug, Clone, PartialEq)]
pub struct EgoHistory {
    capacity: usize,
    entries: VecDeque<Trajectory>,
}

impl Default for EgoHistory {
    fn default() -> Self {
        Self::new(DEFAULT_K)
    }
}

impl EgoHistory {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity >= 1, "history capacity must be positive");
        Self {
            capacity,
            entries: VecDeque::with_capacity(capacity),
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Appends a roll-out, evicting the oldest entry when full.
    pub fn push(&mut self, ego: Trajectory) {
        if self.entries.len() == self.capacity {
            self.entries.pop_front();
        }
        self.entries.push_back(ego);
    }

    pub fn latest(&self) -> Option<&Trajectory> {
        self.entries.back()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Trajectory> {
        self.entries.iter()
    }
}

/// Realized ego trajectory of a roll-out.
pub fn ego_trajectory(s: &Scenario, r: &RolloutRecord) -> Result<Trajectory> {
    r.agent(s.ego_id)
        .ok_or_else(|| Error::InvalidInput("roll-out has no ego".into()))?
        .trajectory()
}

/// Adversary trajectory with its future replaced by `candidate`.
pub fn adversary_with(s: &Scenario, candidate: &Trajectory) -> Result<Trajectory> {
    s.adversary().splice_future(candidate)
}

/// Binding used by the oracle: reactive IDM ego, adversary replaying the candidate, and
/// background agents replaying their logs.
pub fn oracle_binding(s: &Scenario, candidate: &Trajectory) -> Result<PolicyBinding> {
    let adv = adversary_with(s, candidate)?;
    Ok(PolicyBinding::replay_all(s)
        .with(s.ego_id, AgentPolicy::Idm(IdmParams::for_trajectory(s.ego())))
        .with(s.adv_id, AgentPolicy::Replay(adv)))
}

/// Scores a candidate by simulating it against the reactive heuristic ego.
pub fn oracle_score(
    s: &Scenario,
    candidate: &Trajectory,
    history: &EgoHistory,
    b: f64,
) -> Result<CritScore> {
    let prev = history
        .latest()
        .ok_or_else(|| Error::InvalidInput("ego history is empty".into()))?;
    let r = run_episode(s, &oracle_binding(s, candidate)?, 0);
    let ego = ego_trajectory(s, &r)?;
    let adv = r
        .agent(s.adv_id)
        .ok_or_else(|| Error::InvalidInput("roll-out has no adversary".into()))?
        .trajectory()?;
    Ok(CritScore {
        f_coll: f_coll(&ego, &adv, b)?,
        f_diff: f_diff(prev, &ego, b)?,
    })
}

/// Unperturbed roll-out with the reactive heuristic ego; seeds oracle histories.
pub fn unperturbed_idm_rollout(s: &Scenario) -> RolloutRecord {
    let b = PolicyBinding::replay_all(s)
        .with(s.ego_id, AgentPolicy::Idm(IdmParams::for_trajectory(s.ego())));
    run_episode(s, &b, 0)
}

fn states_along(t: &Trajectory, fp: Footprint) -> Vec<AgentState> {
    let h = t.headings();
    let v = t.speeds();
    t.points()
        .iter()
        .enumerate()
        .map(|(i, p)| AgentState {
            position: *p,
            heading: h[i],
            speed: v[i],
            footprint: fp,
        })
        .collect()
}

/// First step at which the two swept boxes overlap, and the minimum center distance.
pub fn sweep_overlap(
    cand: &Trajectory,
    cand_fp: Footprint,
    ego: &Trajectory,
    ego_fp: Footprint,
) -> (Option<usize>, f64) {
    let cs = states_along(cand, cand_fp);
    let es = states_along(ego, ego_fp);
    let lo = cand.start_index().max(ego.start_index());
    let hi = cand.end_index().min(ego.end_index());
    let mut first = None;
    let mut min_d = f64::INFINITY;
    if lo > hi {
        return (None, min_d);
    }
    for t in lo..=hi {
        let a = &cs[t - cand.start_index()];
        let b = &es[t - ego.start_index()];
        min_d = min_d.min(a.position.dist(b.position));
        if first.is_none() && detect_collision(a, b).is_some() {
            first = Some(t);
        }
    }
    (first, min_d)
}

/// Per-candidate keys of the bounding-box heuristic.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CatKeys {
    /// History roll-outs the candidate overlaps.
    pub hits: usize,
    /// Earliest overlap step across history roll-outs.
    pub earliest: Option<usize>,
    /// Minimum point-wise distance across history roll-outs.
    pub min_dist: f64,
}

pub fn cat_keys(
    candidates: &CandidateSet,
    history: &EgoHistory,
    ego_fp: Footprint,
    adv_fp: Footprint,
) -> Vec<CatKeys> {
    candidates
        .candidates
        .iter()
        .map(|c| {
            let mut k = CatKeys {
                hits: 0,
                earliest: None,
                min_dist: f64::INFINITY,
            };
            for h in history.iter() {
                let (first, d) = sweep_overlap(c, adv_fp, h, ego_fp);
                if let Some(t) = first {
                    k.hits += 1;
                    k.earliest = Some(k.earliest.map_or(t, |e| e.min(t)));
                }
                k.min_dist = k.min_dist.min(d);
            }
            k
        })
        .collect()
}

/// Index chosen by the bounding-box overlap heuristic: most overlapping history
/// roll-outs, then earliest overlap; if nothing overlaps, closest approach. Ties go to
/// the lowest index.
pub fn select_cat(keys: &[CatKeys]) -> usize {
    let any_hit = keys.iter().any(|k| k.hits > 0);
    let mut best = 0;
    for i in 1..keys.len() {
        let (a, b) = (&keys[i], &keys[best]);
        let better = if any_hit {
            a.hits > b.hits
                || (a.hits == b.hits
                    && a.hits > 0
                    && a.earliest.unwrap_or(usize::MAX) < b.earliest.unwrap_or(usize::MAX))
        } else {
            a.min_dist < b.min_dist
        };
        if better {
            best = i;
        }
    }
    best
}

pub fn rank_heuristic_cat(
    candidates: &CandidateSet,
    history: &EgoHistory,
    ego_fp: Footprint,
    adv_fp: Footprint,
) -> Result<usize> {
    if history.is_empty() {
        return Err(Error::InvalidInput("ego history is empty".into()));
    }
    if candidates.is_empty() {
        return Err(Error::InvalidInput("no candidates to rank".into()));
    }
    Ok(select_cat(&cat_keys(candidates, history, ego_fp, adv_fp)))
}

/// One scored training example.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusEntry {
    pub scenario_id: String,
    pub candidate_index: usize,
    pub ego_prev: Trajectory,
    pub candidate: Trajectory,
    pub f_coll: f64,
    pub f_diff: f64,
}

impl CorpusEntry {
    pub fn score(&self) -> CritScore {
        CritScore {
            f_coll: self.f_coll,
            f_diff: self.f_diff,
        }
    }
}

/// Oracle-scored candidate sets for each scenario; the history holds the scenario's
/// unperturbed reactive roll-out. Order is (scenario order, candidate index).
pub fn build_oracle_corpus(scenarios: &[Scenario], seed: u64, b: f64) -> Result<Vec<CorpusEntry>> {
    let per: Vec<Result<Vec<CorpusEntry>>> = scenarios
        .par_iter()
        .map(|s| {
            let base = unperturbed_idm_rollout(s);
            let prev = ego_trajectory(s, &base)?;
            let mut hist = EgoHistory::default();
            hist.push(prev.clone());
            let set = sample_candidates(s, seed)?;
            set.candidates
                .iter()
                .enumerate()
                .map(|(i, c)| {
                    let sc = oracle_score(s, c, &hist, b)?;
                    Ok(CorpusEntry {
                        scenario_id: s.id.clone(),
                        candidate_index: i,
                        ego_prev: prev.clone(),
                        candidate: c.clone(),
                        f_coll: sc.f_coll,
                        f_diff: sc.f_diff,
                    })
                })
                .collect()
        })
        .collect();
    let mut out = Vec::new();
    for r in per {
        out.extend(r?);
    }
    Ok(out)
}

#[derive(Serialize, Deserialize)]
struct CorpusLine {
    scenario_id: String,
    candidate_index: usize,
    ego_prev_start: usize,
    ego_prev: Vec<Vec2>,
    candidate_start: usize,
    candidate: Vec<Vec2>,
    f_coll: f64,
    f_diff: f64,
}

pub fn write_corpus(path: &Path, entries: &[CorpusEntry]) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = std::io::BufWriter::new(file);
    for e in entries {
        let line = CorpusLine {
            scenario_id: e.scenario_id.clone(),
            candidate_index: e.candidate_index,
            ego_prev_start: e.ego_prev.start_index(),
            ego_prev: e.ego_prev.points().to_vec(),
            candidate_start: e.candidate.start_index(),
            candidate: e.candidate.points().to_vec(),
            f_coll: e.f_coll,
            f_diff: e.f_diff,
        };
        let text = serde_json::to_string(&line).expect("corpus line serializes");
        writeln!(out, "{text}").map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

pub fn read_corpus(path: &Path) -> Result<Vec<CorpusEntry>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, l) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let line: CorpusLine = serde_json::from_str(l)
            .map_err(|e| Error::parse(format!("line {}", i + 1), e.to_string()))?;
        out.push(CorpusEntry {
            scenario_id: line.scenario_id,
            candidate_index: line.candidate_index,
            ego_prev: Trajectory::new(line.ego_prev_start, line.ego_prev)?,
            candidate: Trajectory::new(line.candidate_start, line.candidate)?,
            f_coll: line.f_coll,
            f_diff: line.f_diff,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{generate_synthetic, Template, HISTORY_END};

    fn line(start: usize, p0: Vec2, v: Vec2, n: usize) -> Trajectory {
        Trajectory::new(start, (0..n).map(|i| p0 + v * i as f64).collect()).unwrap()
    }

    #[test]
    fn f_coll_closed_forms() {
        let a = line(0, Vec2::ZERO, Vec2::new(1.0, 0.0), 20);
        let b = line(0, Vec2::new(0.0, 8.0), Vec2::new(1.0, 0.0), 20);
        assert!((f_coll(&a, &b, 8.0).unwrap() - (-1.0f64).exp()).abs() < 1e-12);
        assert_eq!(f_coll(&a, &a, 8.0).unwrap(), 1.0);
        let far = line(0, Vec2::new(0.0, 1000.0), Vec2::ZERO, 20);
        assert!(f_coll(&a, &far, 8.0).unwrap() < 1e-5);
    }

    #[test]
    fn f_diff_closed_forms() {
        let a = line(0, Vec2::ZERO, Vec2::new(1.0, 0.0), 9);
        assert_eq!(f_diff(&a, &a, 8.0).unwrap(), 0.0);
        // 8 aligned points each 1 m apart sum to 8 m.
        let b = line(0, Vec2::new(0.0, 1.0), Vec2::new(1.0, 0.0), 8);
        assert!((f_diff(&a, &b, 8.0).unwrap() - (1.0 - (-1.0f64).exp())).abs() < 1e-12);
        let far = line(0, Vec2::new(0.0, 1e4), Vec2::new(1.0, 0.0), 9);
        assert!(f_diff(&a, &far, 8.0).unwrap() > 1.0 - 1e-5);
    }

    #[test]
    fn disjoint_windows_are_errors() {
        let a = line(0, Vec2::ZERO, Vec2::new(1.0, 0.0), 5);
        let b = line(10, Vec2::ZERO, Vec2::new(1.0, 0.0), 5);
        assert!(f_coll(&a, &b, 8.0).is_err());
        assert!(f_diff(&a, &b, 8.0).is_err());
    }

    #[test]
    fn history_evicts_oldest() {
        let mut h = EgoHistory::new(5);
        let mut model: Vec<usize> = Vec::new();
        for k in 0..12 {
            h.push(line(0, Vec2::new(k as f64, 0.0), Vec2::ZERO, 2));
            model.push(k);
            if model.len() > 5 {
                model.remove(0);
            }
            assert!(h.len() <= 5);
            let xs: Vec<usize> = h.iter().map(|t| t.first().x as usize).collect();
            assert_eq!(xs, model);
        }
    }

    #[test]
    fn oracle_requires_history() {
        let s = generate_synthetic(0, Template::StraightMerge, 0);
        let c = sample_candidates(&s, 0).unwrap();
        assert!(oracle_score(&s, c.get(0), &EgoHistory::default(), DEFAULT_B).is_err());
    }

    #[test]
    fn oracle_on_original_future_reproduces_baseline() {
        let s = generate_synthetic(2, Template::CurveFollow, 0);
        let base = unperturbed_idm_rollout(&s);
        let mut h = EgoHistory::default();
        h.push(ego_trajectory(&s, &base).unwrap());
        let gt_future = Trajectory::new(
            HISTORY_END,
            s.adversary().points()[HISTORY_END..].to_vec(),
        )
        .unwrap();
        let sc = oracle_score(&s, &gt_future, &h, DEFAULT_B).unwrap();
        assert!(sc.f_diff.abs() < 1e-12, "f_diff {}", sc.f_diff);
        let adv = s.adversary();
        let ego = h.latest().unwrap();
        let expected = f_coll(ego, adv, DEFAULT_B).unwrap();
        assert!((sc.f_coll - expected).abs() < 1e-12);
    }

    #[test]
    fn stopping_in_ego_lane_raises_f_coll() {
        // The ego approaches an adversary that brakes to a stop in its lane: the IDM ego
        // stops behind it, so the closest approach falls below b.
        let s = generate_synthetic(2, Template::CurveFollow, 0);
        let set = sample_candidates(&s, 0).unwrap();
        let base = unperturbed_idm_rollout(&s);
        let mut h = EgoHistory::default();
        h.push(ego_trajectory(&s, &base).unwrap());
        let stopping = set
            .candidates
            .iter()
            .find(|c| c.speeds().iter().rev().take(5).all(|v| *v < 1e-6))
            .expect("hard-brake candidate stops");
        let sc = oracle_score(&s, stopping, &h, DEFAULT_B).unwrap();
        assert!(sc.f_coll > (-1.0f64).exp(), "f_coll {}", sc.f_coll);
    }

    fn keys(hits: usize, earliest: Option<usize>, d: f64) -> CatKeys {
        CatKeys {
            hits,
            earliest,
            min_dist: d,
        }
    }

    #[test]
    fn cat_rule_keys() {
        assert_eq!(
            select_cat(&[keys(0, None, 1.0), keys(3, Some(40), 0.0), keys(0, None, 0.5)]),
            1
        );
        assert_eq!(
            select_cat(&[keys(2, Some(30), 0.0), keys(2, Some(12), 0.0)]),
            1
        );
        assert_eq!(select_cat(&[keys(0, None, 4.1), keys(0, None, 2.2)]), 1);
        assert_eq!(select_cat(&[keys(0, None, 2.0), keys(0, None, 2.0)]), 0);
    }

    #[test]
    fn cat_fallback_on_fixture() {
        let ego = line(0, Vec2::ZERO, Vec2::new(1.0, 0.0), 91);
        let mut h = EgoHistory::default();
        h.push(ego);
        let c0 = line(10, Vec2::new(10.0, 4.1), Vec2::new(1.0, 0.0), 81);
        let c1 = line(10, Vec2::new(10.0, -2.2), Vec2::new(1.0, 0.0), 81);
        let set = CandidateSet {
            scenario_id: "fixture".into(),
            seed: 0,
            candidates: vec![c0, c1],
        };
        // Boxes 2 m wide with centers 2.2 m apart laterally do not overlap.
        let fp = Footprint::default();
        let ks = cat_keys(&set, &h, fp, fp);
        assert_eq!(ks[0].hits + ks[1].hits, 0);
        assert!((ks[1].min_dist - 2.2).abs() < 1e-9);
        assert_eq!(rank_heuristic_cat(&set, &h, fp, fp).unwrap(), 1);
    }

    #[test]
    fn corpus_round_trip() {
        let s = generate_synthetic(1, Template::StraightMerge, 0);
        let corpus = build_oracle_corpus(std::slice::from_ref(&s), 0, DEFAULT_B).unwrap();
        assert_eq!(corpus.len(), 32);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.jsonl");
        write_corpus(&p, &corpus).unwrap();
        let back = read_corpus(&p).unwrap();
        assert_eq!(back, corpus);
    }
}
