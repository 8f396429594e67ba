//! Outcome rates, behavioral realism (1-D Wasserstein distances between adversary
//! behavior histograms) and collision severity statistics.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::wrap_angle;
use crate::scenario::{AgentId, Scenario, Trajectory, DT};
use crate::sim::collision::detect_offroad;
use crate::sim::episode::{Outcome, RolloutRecord};
use crate::sim::kinematics::AgentState;

pub const YAW_RANGE: (f64, f64) = (-1.5, 1.5);
pub const ACC_RANGE: (f64, f64) = (-8.0, 8.0);
pub const BEHAVIOR_BINS: usize = 21;
pub const HEAD_ON_MIN_ANGLE: f64 = 135.0 * std::f64::consts::PI / 180.0;
/// Collisions faster than this along the contact normal are severe (m/s).
pub const SEVERE_SPEED: f64 = 5.0;

/// Normalized histogram over uniform bins on [lo, hi]. Samples outside the range land
/// in the end bins.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub lo: f64,
    pub hi: f64,
    pub mass: Vec<f64>,
    /// True when built from zero samples (mass is then all zero).
    pub empty: bool,
}

impl Histogram {
    pub fn from_samples(lo: f64, hi: f64, bins: usize, samples: impl IntoIterator<Item = f64>) -> Self {
        let mut mass = vec![0.0; bins];
        let w = (hi - lo) / bins as f64;
        let mut n = 0usize;
        for x in samples {
            let i = (((x - lo) / w).floor().max(0.0) as usize).min(bins - 1);
            mass[i] += 1.0;
            n += 1;
        }
        if n > 0 {
            for m in &mut mass {
                *m /= n as f64;
            }
        }
        Self {
            lo,
            hi,
            mass,
            empty: n == 0,
        }
    }

    /// Histogram over the {0, 1} indicator, with unit-width bins centered on 0 and 1.
    pub fn indicator(flags: impl IntoIterator<Item = bool>) -> Self {
        Self::from_samples(-0.5, 1.5, 2, flags.into_iter().map(|b| if b { 1.0 } else { 0.0 }))
    }

    pub fn bin_width(&self) -> f64 {
        (self.hi - self.lo) / self.mass.len() as f64
    }
}

/// W1 = sum over bins of |CDF_p - CDF_q| times the bin width.
pub fn wasserstein_1d(p: &Histogram, q: &Histogram) -> Result<f64> {
    if p.mass.len() != q.mass.len() || p.lo != q.lo || p.hi != q.hi {
        return Err(Error::InvalidInput("histograms have different bins".into()));
    }
    if p.empty || q.empty {
        return Err(Error::InvalidInput("histogram has no samples".into()));
    }
    let w = p.bin_width();
    let (mut cp, mut cq, mut total) = (0.0, 0.0, 0.0);
    for (a, b) in p.mass.iter().zip(&q.mass) {
        cp += a;
        cq += b;
        total += (cp - cq).abs() * w;
    }
    Ok(total)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BehaviorProfile {
    pub yaw: Histogram,
    pub acc: Histogram,
    pub road: Histogram,
}

/// Profile from per-step headings, speeds and off-road flags.
pub fn profile_from_series(heading: &[f64], speed: &[f64], offroad: &[bool]) -> Result<BehaviorProfile> {
    if heading.len() < 2 || speed.len() < 2 {
        return Err(Error::InvalidInput("trace shorter than 2 steps".into()));
    }
    let yaw = heading.windows(2).map(|w| wrap_angle(w[1] - w[0]) / DT);
    let acc = speed.windows(2).map(|w| (w[1] - w[0]) / DT);
    Ok(BehaviorProfile {
        yaw: Histogram::from_samples(YAW_RANGE.0, YAW_RANGE.1, BEHAVIOR_BINS, yaw),
        acc: Histogram::from_samples(ACC_RANGE.0, ACC_RANGE.1, BEHAVIOR_BINS, acc),
        road: Histogram::indicator(offroad.iter().copied()),
    })
}

pub fn build_profile(rollout: &RolloutRecord, agent: AgentId) -> Result<BehaviorProfile> {
    let a = rollout
        .agent(agent)
        .ok_or_else(|| Error::InvalidInput(format!("agent {agent} not in roll-out")))?;
    profile_from_series(&a.heading, &a.speed, &a.offroad)
}

/// Profile of a recorded trajectory restricted to steps [from, to].
pub fn ground_truth_profile(s: &Scenario, agent: AgentId, from: usize, to: usize) -> Result<BehaviorProfile> {
    let t: &Trajectory = s.trajectory(agent);
    let lo = from.max(t.start_index());
    let hi = to.min(t.end_index());
    if hi < lo + 1 {
        return Err(Error::InvalidInput("ground-truth window shorter than 2 steps".into()));
    }
    let i0 = lo - t.start_index();
    let i1 = hi - t.start_index();
    let h = t.headings();
    let v = t.speeds();
    let fp = s.footprint(agent);
    let off: Vec<bool> = (i0..=i1)
        .map(|i| {
            detect_offroad(
                &AgentState {
                    position: t.points()[i],
                    heading: h[i],
                    speed: v[i],
                    footprint: fp,
                },
                &s.map,
            )
        })
        .collect();
    profile_from_series(&h[i0..=i1], &v[i0..=i1], &off)
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Realism {
    pub yaw: f64,
    pub acc: f64,
    pub road: f64,
    pub mean: f64,
}

/// Wasserstein distances between the roll-out adversary's profile and its recorded
/// profile over the same step window.
pub fn realism(rollout: &RolloutRecord, base: &Scenario) -> Result<Realism> {
    let adv = base.adv_id;
    let a = rollout
        .agent(adv)
        .ok_or_else(|| Error::InvalidInput("adversary not in roll-out".into()))?;
    let p = build_profile(rollout, adv)?;
    let q = ground_truth_profile(base, adv, a.start_step, a.end_step())?;
    let yaw = wasserstein_1d(&p.yaw, &q.yaw)?;
    let acc = wasserstein_1d(&p.acc, &q.acc)?;
    let road = wasserstein_1d(&p.road, &q.road)?;
    Ok(Realism {
        yaw,
        acc,
        road,
        mean: (yaw + acc + road) / 3.0,
    })
}

/// Collision details of one crash episode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CrashInfo {
    pub speed: f64,
    pub head_on: bool,
    pub severe_head_on: bool,
}

/// Crash geometry of an episode, using the ego's collision partner at the contact step.
pub fn crash_info(r: &RolloutRecord) -> Option<CrashInfo> {
    if r.outcome != Outcome::Crash {
        return None;
    }
    let c = r.contact?;
    let speed = c.rel_speed.abs();
    let head_on = r
        .heading_difference(r.ego_id, c.partner, r.term_step)
        .is_some_and(|d| d >= HEAD_ON_MIN_ANGLE - 1e-12);
    Some(CrashInfo {
        speed,
        head_on,
        severe_head_on: head_on && speed > SEVERE_SPEED,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CollisionStats {
    pub mean_vel: f64,
    pub head_on: f64,
    pub severe_head_on: f64,
    pub n_crashes: usize,
}

pub fn collision_stats(rollouts: &[RolloutRecord]) -> CollisionStats {
    let crashes: Vec<CrashInfo> = rollouts.iter().filter_map(crash_info).collect();
    if crashes.is_empty() {
        return CollisionStats::default();
    }
    let n = rollouts.len() as f64;
    CollisionStats {
        mean_vel: crashes.iter().map(|c| c.speed).sum::<f64>() / crashes.len() as f64,
        head_on: crashes.iter().filter(|c| c.head_on).count() as f64 / n,
        severe_head_on: crashes.iter().filter(|c| c.severe_head_on).count() as f64 / n,
        n_crashes: crashes.len(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Rates {
    pub success: f64,
    pub crash: f64,
    pub offroad: f64,
    pub timeout: f64,
}

pub fn outcome_rates(rollouts: &[RolloutRecord]) -> Rates {
    let n = rollouts.len().max(1) as f64;
    let count = |o: Outcome| rollouts.iter().filter(|r| r.outcome == o).count() as f64 / n;
    Rates {
        success: count(Outcome::Success),
        crash: count(Outcome::Crash),
        offroad: count(Outcome::OutOfRoad),
        timeout: count(Outcome::Timeout),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub run_id: String,
    pub n_episodes: usize,
    pub rates: Rates,
    pub realism: Realism,
    pub collision: CollisionStats,
}

impl MetricsReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_text(path, &self.to_json())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::parse("report", e.to_string()))
    }
}

/// Per-episode row of the plotting CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeMetrics {
    pub scenario_id: String,
    pub seed: u64,
    pub outcome: Outcome,
    pub term_step: usize,
    pub yaw_wd: f64,
    pub acc_wd: f64,
    pub road_wd: f64,
    pub realism: f64,
    pub collision_speed: f64,
    pub head_on: bool,
    pub severe_head_on: bool,
}

pub fn episode_metrics(r: &RolloutRecord, base: &Scenario) -> Result<EpisodeMetrics> {
    let re = realism(r, base)?;
    let crash = crash_info(r);
    Ok(EpisodeMetrics {
        scenario_id: r.scenario_id.clone(),
        seed: r.seed,
        outcome: r.outcome,
        term_step: r.term_step,
        yaw_wd: re.yaw,
        acc_wd: re.acc,
        road_wd: re.road,
        realism: re.mean,
        collision_speed: crash.map_or(0.0, |c| c.speed),
        head_on: crash.is_some_and(|c| c.head_on),
        severe_head_on: crash.is_some_and(|c| c.severe_head_on),
    })
}

/// Rates, mean per-episode realism and collision statistics. Episodes are reduced in
/// (scenario id, seed) order so the result does not depend on input order.
pub fn aggregate(run_id: &str, rollouts: &[RolloutRecord], bases: &[Scenario]) -> Result<(MetricsReport, Vec<EpisodeMetrics>)> {
    if rollouts.len() != bases.len() {
        return Err(Error::InvalidInput("one base scenario per roll-out required".into()));
    }
    let mut pairs: Vec<(&RolloutRecord, &Scenario)> = rollouts.iter().zip(bases).collect();
    pairs.sort_by(|a, b| (&a.0.scenario_id, a.0.seed).cmp(&(&b.0.scenario_id, b.0.seed)));
    let rows = pairs
        .iter()
        .map(|(r, s)| episode_metrics(r, s))
        .collect::<Result<Vec<_>>>()?;
    let sorted: Vec<RolloutRecord> = pairs.iter().map(|(r, _)| (*r).clone()).collect();
    let n = rows.len().max(1) as f64;
    let mean = |f: fn(&EpisodeMetrics) -> f64| rows.iter().map(f).sum::<f64>() / n;
    let report = MetricsReport {
        run_id: run_id.to_string(),
        n_episodes: rows.len(),
        rates: outcome_rates(&sorted),
        realism: Realism {
            yaw: mean(|r| r.yaw_wd),
            acc: mean(|r| r.acc_wd),
            road: mean(|r| r.road_wd),
            mean: mean(|r| r.realism),
        },
        collision: collision_stats(&sorted),
    };
    Ok((report, rows))
}

pub fn write_episode_csv(path: &Path, rows: &[EpisodeMetrics]) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::Validation(e.to_string()))?;
    for r in rows {
        w.serialize(r).map_err(|e| Error::Validation(e.to_string()))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub(crate) fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}
