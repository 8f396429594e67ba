//! Polyline-encoder criticality scorer trained by manual backpropagation.
//!
//! Both trajectories are cut into segments (every `STRIDE` steps), each segment becomes an
//! 8-dim feature vector in a frame anchored at the candidate's first point and heading,
//! a shared linear+ReLU encoder maps segments to 64 channels, channels are max-pooled per
//! polyline, and an MLP 128-64-2 with sigmoid outputs predicts (f_coll, f_diff).

use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{CorpusEntry, CritScore, EgoHistory};
use crate::candidates::CandidateSet;
use crate::error::{Error, Result};
use crate::geometry::{RigidTransform, Vec2};
use crate::rng;
use crate::scenario::Trajectory;

pub const FEATURE_DIM: usize = 8;
pub const ENCODER_DIM: usize = 64;
pub const HIDDEN_DIM: usize = 64;
pub const OUTPUT_DIM: usize = 2;
/// Steps per polyline segment.
pub const STRIDE: usize = 5;
pub const MIN_CORPUS: usize = 500;
pub const MODEL_FORMAT_VERSION: u32 = 1;

const ARCHITECTURE: &str = "seg8-lin64-relu-maxpool-concat128-lin64-relu-lin2-sigmoid/stride5/closeness";

const W1: usize = 0;
const B1: usize = W1 + ENCODER_DIM * FEATURE_DIM;
const W2: usize = B1 + ENCODER_DIM;
const B2: usize = W2 + HIDDEN_DIM * 2 * ENCODER_DIM;
const W3: usize = B2 + HIDDEN_DIM;
const B3: usize = W3 + OUTPUT_DIM * HIDDEN_DIM;
pub const NUM_PARAMS: usize = B3 + OUTPUT_DIM;

pub fn architecture_hash() -> String {
    hex::encode(Sha256::digest(ARCHITECTURE.as_bytes()))
}

/// Segment features of one (ego, candidate) pair, before normalization.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedPair {
    pub ego: Vec<[f64; FEATURE_DIM]>,
    pub adv: Vec<[f64; FEATURE_DIM]>,
}

/// Position at fractional step `t`, clamped to the recorded range.
fn position_at(t: &Trajectory, step: f64) -> Vec2 {
    let lo = t.start_index() as f64;
    let hi = t.end_index() as f64;
    let s = step.clamp(lo, hi);
    let i = (s - lo).floor() as usize;
    let pts = t.points();
    if i + 1 >= pts.len() {
        return pts[pts.len() - 1];
    }
    pts[i].lerp(pts[i + 1], s - lo - i as f64)
}

/// Sample steps over [lo, hi] every `STRIDE`, always including `hi`.
fn sample_steps(lo: usize, hi: usize) -> Vec<usize> {
    let mut v: Vec<usize> = (lo..=hi).step_by(STRIDE).collect();
    if *v.last().unwrap() != hi {
        v.push(hi);
    }
    v
}

fn segments(
    own: &Trajectory,
    steps: &[usize],
    other: &Trajectory,
    role: f64,
    frame: &RigidTransform,
    t0: f64,
) -> Vec<[f64; FEATURE_DIM]> {
    steps
        .windows(2)
        .map(|w| {
            let a = frame.apply(own.at(w[0]).unwrap());
            let b = frame.apply(own.at(w[1]).unwrap());
            let d = b - a;
            let len = d.norm();
            let dir = if len > 1e-9 { d * (1.0 / len) } else { Vec2::ZERO };
            let mid = a.lerp(b, 0.5);
            let tm = (w[0] + w[1]) as f64 / 2.0;
            // Closest time-aligned approach to the other polyline within this segment.
            let cross = (w[0]..=w[1])
                .map(|t| own.at(t).unwrap().dist(position_at(other, t as f64)))
                .fold(f64::INFINITY, f64::min);
            [
                mid.x / 50.0,
                mid.y / 50.0,
                dir.x,
                dir.y,
                len / 5.0,
                role,
                (tm - t0) / 80.0,
                (-cross / super::DEFAULT_B).exp(),
            ]
        })
        .collect()
}

/// Segment features in the frame anchored at the candidate's first point and heading.
pub fn encode_pair(ego_prev: &Trajectory, candidate: &Trajectory) -> EncodedPair {
    let heading = candidate.headings()[0];
    let origin = candidate.first();
    // Maps world -> candidate frame: rotate by -heading about the origin.
    let frame = RigidTransform {
        theta: -heading,
        offset: -origin.rotate(-heading),
    };
    let t0 = candidate.start_index() as f64;
    let adv_steps = sample_steps(candidate.start_index(), candidate.end_index());
    let lo = ego_prev.start_index().max(candidate.start_index());
    let hi = ego_prev.end_index().min(candidate.end_index());
    let ego_steps = if hi > lo {
        sample_steps(lo, hi)
    } else {
        vec![ego_prev.end_index() - 1, ego_prev.end_index()]
    };
    EncodedPair {
        ego: segments(ego_prev, &ego_steps, candidate, 1.0, &frame, t0),
        adv: segments(candidate, &adv_steps, ego_prev, -1.0, &frame, t0),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScorerModel {
    pub version: u32,
    pub architecture: String,
    pub arch_hash: String,
    pub seed: u64,
    pub feature_mean: [f64; FEATURE_DIM],
    pub feature_std: [f64; FEATURE_DIM],
    pub params: Vec<f64>,
    pub train_loss: f64,
    pub val_loss: f64,
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Forward pass intermediates needed by backprop.
struct Forward {
    /// Per segment pre-activations of the encoder, ego then adversary.
    pre_ego: Vec<[f64; ENCODER_DIM]>,
    pre_adv: Vec<[f64; ENCODER_DIM]>,
    arg_ego: [usize; ENCODER_DIM],
    arg_adv: [usize; ENCODER_DIM],
    pooled: [f64; 2 * ENCODER_DIM],
    hidden_pre: [f64; HIDDEN_DIM],
    out: [f64; OUTPUT_DIM],
}

fn encode_segments(p: &[f64], segs: &[[f64; FEATURE_DIM]]) -> Vec<[f64; ENCODER_DIM]> {
    segs.iter()
        .map(|x| {
            let mut z = [0.0; ENCODER_DIM];
            for (c, zc) in z.iter_mut().enumerate() {
                let row = &p[W1 + c * FEATURE_DIM..W1 + (c + 1) * FEATURE_DIM];
                *zc = p[B1 + c] + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>();
            }
            z
        })
        .collect()
}

fn max_pool(pre: &[[f64; ENCODER_DIM]]) -> ([f64; ENCODER_DIM], [usize; ENCODER_DIM]) {
    let mut pooled = [0.0; ENCODER_DIM];
    let mut arg = [0usize; ENCODER_DIM];
    for c in 0..ENCODER_DIM {
        let mut best = f64::NEG_INFINITY;
        for (k, z) in pre.iter().enumerate() {
            let v = z[c].max(0.0);
            if v > best {
                best = v;
                arg[c] = k;
            }
        }
        pooled[c] = best.max(0.0);
    }
    (pooled, arg)
}

fn forward(p: &[f64], x: &EncodedPair) -> Forward {
    let pre_ego = encode_segments(p, &x.ego);
    let pre_adv = encode_segments(p, &x.adv);
    let (pe, arg_ego) = max_pool(&pre_ego);
    let (pa, arg_adv) = max_pool(&pre_adv);
    let mut pooled = [0.0; 2 * ENCODER_DIM];
    pooled[..ENCODER_DIM].copy_from_slice(&pe);
    pooled[ENCODER_DIM..].copy_from_slice(&pa);
    let mut hidden_pre = [0.0; HIDDEN_DIM];
    for (j, h) in hidden_pre.iter_mut().enumerate() {
        let row = &p[W2 + j * 2 * ENCODER_DIM..W2 + (j + 1) * 2 * ENCODER_DIM];
        *h = p[B2 + j] + row.iter().zip(&pooled).map(|(w, v)| w * v).sum::<f64>();
    }
    let mut out = [0.0; OUTPUT_DIM];
    for (o, y) in out.iter_mut().enumerate() {
        let row = &p[W3 + o * HIDDEN_DIM..W3 + (o + 1) * HIDDEN_DIM];
        let z = p[B3 + o]
            + row
                .iter()
                .zip(&hidden_pre)
                .map(|(w, h)| w * h.max(0.0))
                .sum::<f64>();
        *y = sigmoid(z);
    }
    Forward {
        pre_ego,
        pre_adv,
        arg_ego,
        arg_adv,
        pooled,
        hidden_pre,
        out,
    }
}

fn loss_of(out: &[f64; OUTPUT_DIM], target: &CritScore, per_head: bool) -> f64 {
    if per_head {
        (out[0] - target.f_coll).powi(2) + (out[1] - target.f_diff).powi(2)
    } else {
        (out[0] + out[1] - target.sum()).powi(2)
    }
}

/// Loss of one example and its gradient with respect to all parameters (added to `grad`).
fn backward(
    p: &[f64],
    x: &EncodedPair,
    target: &CritScore,
    per_head: bool,
    grad: &mut [f64],
) -> f64 {
    let f = forward(p, x);
    let loss = loss_of(&f.out, target, per_head);
    let d_out = if per_head {
        [2.0 * (f.out[0] - target.f_coll), 2.0 * (f.out[1] - target.f_diff)]
    } else {
        let g = 2.0 * (f.out[0] + f.out[1] - target.sum());
        [g, g]
    };
    let mut d_hidden = [0.0; HIDDEN_DIM];
    for o in 0..OUTPUT_DIM {
        let dz = d_out[o] * f.out[o] * (1.0 - f.out[o]);
        grad[B3 + o] += dz;
        for j in 0..HIDDEN_DIM {
            let h = f.hidden_pre[j].max(0.0);
            grad[W3 + o * HIDDEN_DIM + j] += dz * h;
            d_hidden[j] += dz * p[W3 + o * HIDDEN_DIM + j];
        }
    }
    let mut d_pooled = [0.0; 2 * ENCODER_DIM];
    for j in 0..HIDDEN_DIM {
        if f.hidden_pre[j] <= 0.0 {
            continue;
        }
        let dh = d_hidden[j];
        grad[B2 + j] += dh;
        let base = W2 + j * 2 * ENCODER_DIM;
        for k in 0..2 * ENCODER_DIM {
            grad[base + k] += dh * f.pooled[k];
            d_pooled[k] += dh * p[base + k];
        }
    }
    for c in 0..ENCODER_DIM {
        for (pre, arg, segs, off) in [
            (&f.pre_ego, &f.arg_ego, &x.ego, 0usize),
            (&f.pre_adv, &f.arg_adv, &x.adv, ENCODER_DIM),
        ] {
            let k = arg[c];
            if pre.is_empty() || pre[k][c] <= 0.0 {
                continue;
            }
            let d = d_pooled[off + c];
            grad[B1 + c] += d;
            for (i, v) in segs[k].iter().enumerate() {
                grad[W1 + c * FEATURE_DIM + i] += d * v;
            }
        }
    }
    loss
}

impl ScorerModel {
    fn normalize(&self, x: &EncodedPair) -> EncodedPair {
        let n = |s: &[f64; FEATURE_DIM]| {
            let mut o = [0.0; FEATURE_DIM];
            for i in 0..FEATURE_DIM {
                o[i] = (s[i] - self.feature_mean[i]) / self.feature_std[i];
            }
            o
        };
        EncodedPair {
            ego: x.ego.iter().map(n).collect(),
            adv: x.adv.iter().map(n).collect(),
        }
    }

    pub fn predict_encoded(&self, x: &EncodedPair) -> CritScore {
        let out = forward(&self.params, &self.normalize(x)).out;
        CritScore {
            f_coll: out[0],
            f_diff: out[1],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.arch_hash != architecture_hash() {
            return Err(Error::Config(
                "scorer model was trained for a different architecture".into(),
            ));
        }
        if self.params.len() != NUM_PARAMS {
            return Err(Error::Config(format!(
                "scorer model has {} parameters, expected {NUM_PARAMS}",
                self.params.len()
            )));
        }
        let finite = self.params.iter().all(|w| w.is_finite())
            && self.feature_mean.iter().all(|v| v.is_finite())
            && self.feature_std.iter().all(|v| v.is_finite() && *v > 0.0);
        if !finite {
            return Err(Error::Validation("scorer model has non-finite weights".into()));
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        let text = serde_json::to_string(self).expect("model serializes");
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let de = &mut serde_json::Deserializer::from_str(&text);
        let m: ScorerModel = serde_path_to_error::deserialize(de)
            .map_err(|e| Error::parse(e.path().to_string(), e.inner().to_string()))?;
        m.validate()?;
        Ok(m)
    }
}

pub fn predict_score(model: &ScorerModel, ego_prev: &Trajectory, candidate: &Trajectory) -> CritScore {
    model.predict_encoded(&encode_pair(ego_prev, candidate))
}

/// Candidate index with the highest predicted sum averaged over the history; ties go to
/// the lowest index. Also returns every candidate's averaged sum.
pub fn rank_learned(
    model: &ScorerModel,
    candidates: &CandidateSet,
    history: &EgoHistory,
) -> Result<(usize, Vec<f64>)> {
    if history.is_empty() {
        return Err(Error::InvalidInput("ego history is empty".into()));
    }
    let scores: Vec<f64> = candidates
        .candidates
        .iter()
        .map(|c| {
            history
                .iter()
                .map(|h| predict_score(model, h, c).sum())
                .sum::<f64>()
                / history.len() as f64
        })
        .collect();
    Ok((argmax_first(&scores), scores))
}

/// Index of the maximum; the lowest index wins ties.
pub fn argmax_first(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScorerConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub val_fraction: f64,
    /// Supervise each head separately instead of only their sum.
    pub per_head_loss: bool,
}

impl Default for ScorerConfig {
    fn default() -> Self {
        Self {
            epochs: 100,
            batch_size: 32,
            learning_rate: 3e-3,
            val_fraction: 0.2,
            per_head_loss: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub train_loss: f64,
    pub val_loss: f64,
    pub best_epoch: usize,
    pub n_train: usize,
    pub n_val: usize,
    /// Scenario ids held out for validation (empty when the split is by example).
    pub val_scenarios: Vec<String>,
}

/// Splits example indices into (train, validation). With enough distinct scenarios the
/// split is by scenario so validation scenarios are unseen.
pub fn split_indices(corpus: &[CorpusEntry], val_fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>, Vec<String>) {
    let mut ids: Vec<&str> = corpus.iter().map(|e| e.scenario_id.as_str()).collect();
    ids.sort_unstable();
    ids.dedup();
    let mut rng = rng::stream(seed, &[rng::tag("scorer-split")]);
    if ids.len() >= 5 {
        ids.shuffle(&mut rng);
        let n_val = ((ids.len() as f64 * val_fraction).round() as usize).clamp(1, ids.len() - 1);
        let mut val_ids: Vec<String> = ids[..n_val].iter().map(|s| s.to_string()).collect();
        val_ids.sort();
        let (mut tr, mut va) = (Vec::new(), Vec::new());
        for (i, e) in corpus.iter().enumerate() {
            if val_ids.binary_search(&e.scenario_id).is_ok() {
                va.push(i);
            } else {
                tr.push(i);
            }
        }
        (tr, va, val_ids)
    } else {
        let mut idx: Vec<usize> = (0..corpus.len()).collect();
        idx.shuffle(&mut rng);
        let n_val = ((corpus.len() as f64 * val_fraction).round() as usize).clamp(1, corpus.len() - 1);
        let mut va = idx[..n_val].to_vec();
        let mut tr = idx[n_val..].to_vec();
        va.sort_unstable();
        tr.sort_unstable();
        (tr, va, Vec::new())
    }
}

fn init_params(seed: u64) -> Vec<f64> {
    let mut rng = rng::stream(seed, &[rng::tag("scorer-init")]);
    let mut p = vec![0.0; NUM_PARAMS];
    let mut fill = |range: std::ops::Range<usize>, fan_in: usize| {
        let lim = (6.0 / fan_in as f64).sqrt();
        for w in &mut p[range] {
            *w = rng.gen_range(-lim..lim);
        }
    };
    fill(W1..B1, FEATURE_DIM);
    fill(W2..B2, 2 * ENCODER_DIM);
    fill(W3..B3, HIDDEN_DIM);
    p
}

fn feature_stats(pairs: &[EncodedPair]) -> ([f64; FEATURE_DIM], [f64; FEATURE_DIM]) {
    let mut mean = [0.0; FEATURE_DIM];
    let mut sq = [0.0; FEATURE_DIM];
    let mut n: f64 = 0.0;
    for x in pairs {
        for s in x.ego.iter().chain(&x.adv) {
            for i in 0..FEATURE_DIM {
                mean[i] += s[i];
                sq[i] += s[i] * s[i];
            }
            n += 1.0;
        }
    }
    let mut std = [1.0; FEATURE_DIM];
    for i in 0..FEATURE_DIM {
        mean[i] /= n.max(1.0);
        let var = sq[i] / n.max(1.0) - mean[i] * mean[i];
        std[i] = if var > 1e-12 { var.sqrt() } else { 1.0 };
    }
    (mean, std)
}

fn mean_loss(model: &ScorerModel, xs: &[EncodedPair], ys: &[CritScore], idx: &[usize], per_head: bool) -> f64 {
    if idx.is_empty() {
        return 0.0;
    }
    let total: f64 = idx
        .par_iter()
        .map(|&i| loss_of(&forward(&model.params, &xs[i]).out, &ys[i], per_head))
        .collect::<Vec<f64>>()
        .iter()
        .sum();
    total / idx.len() as f64
}

/// Trains the scorer with Adam; deterministic for a given corpus, seed and config.
/// The returned weights are those with the lowest validation loss.
pub fn train_scorer(corpus: &[CorpusEntry], seed: u64, cfg: &ScorerConfig) -> Result<(ScorerModel, TrainReport)> {
    if corpus.len() < MIN_CORPUS {
        return Err(Error::InvalidInput(format!(
            "scorer corpus has {} examples, at least {MIN_CORPUS} required",
            corpus.len()
        )));
    }
    if cfg.batch_size == 0 || cfg.epochs == 0 || !(cfg.learning_rate > 0.0) {
        return Err(Error::Config("invalid scorer training configuration".into()));
    }
    let raw: Vec<EncodedPair> = corpus
        .par_iter()
        .map(|e| encode_pair(&e.ego_prev, &e.candidate))
        .collect();
    let ys: Vec<CritScore> = corpus.iter().map(|e| e.score()).collect();
    let (train_idx, val_idx, val_scenarios) = split_indices(corpus, cfg.val_fraction, seed);
    let train_raw: Vec<EncodedPair> = train_idx.iter().map(|&i| raw[i].clone()).collect();
    let (mean, std) = feature_stats(&train_raw);

    let mut model = ScorerModel {
        version: MODEL_FORMAT_VERSION,
        architecture: ARCHITECTURE.to_string(),
        arch_hash: architecture_hash(),
        seed,
        feature_mean: mean,
        feature_std: std,
        params: init_params(seed),
        train_loss: f64::NAN,
        val_loss: f64::NAN,
    };
    let xs: Vec<EncodedPair> = raw.iter().map(|x| model.normalize(x)).collect();

    let (b1, b2, eps) = (0.9, 0.999, 1e-8);
    let mut m = vec![0.0; NUM_PARAMS];
    let mut v = vec![0.0; NUM_PARAMS];
    let mut t = 0i32;
    let mut order = train_idx.clone();
    let mut rng = rng::stream(seed, &[rng::tag("scorer-shuffle")]);
    let mut best = (f64::INFINITY, model.params.clone(), 0usize);

    for epoch in 0..cfg.epochs {
        // Cosine decay down to 5% of the base rate.
        let progress = epoch as f64 / cfg.epochs as f64;
        let lr = cfg.learning_rate * (0.05 + 0.95 * 0.5 * (1.0 + (std::f64::consts::PI * progress).cos()));
        order.shuffle(&mut rng);
        for batch in order.chunks(cfg.batch_size) {
            let grads: Vec<Vec<f64>> = batch
                .par_iter()
                .map(|&i| {
                    let mut g = vec![0.0; NUM_PARAMS];
                    backward(&model.params, &xs[i], &ys[i], cfg.per_head_loss, &mut g);
                    g
                })
                .collect();
            let mut g = vec![0.0; NUM_PARAMS];
            for gi in &grads {
                for (a, b) in g.iter_mut().zip(gi) {
                    *a += b;
                }
            }
            let scale = 1.0 / batch.len() as f64;
            t += 1;
            let c1 = 1.0 - f64::powi(b1, t);
            let c2 = 1.0 - f64::powi(b2, t);
            for k in 0..NUM_PARAMS {
                let gk = g[k] * scale;
                m[k] = b1 * m[k] + (1.0 - b1) * gk;
                v[k] = b2 * v[k] + (1.0 - b2) * gk * gk;
                model.params[k] -= lr * (m[k] / c1) / ((v[k] / c2).sqrt() + eps);
            }
        }
        let val = mean_loss(&model, &xs, &ys, &val_idx, cfg.per_head_loss);
        if val < best.0 {
            best = (val, model.params.clone(), epoch);
        }
    }
    model.params = best.1;
    model.train_loss = mean_loss(&model, &xs, &ys, &train_idx, cfg.per_head_loss);
    model.val_loss = best.0;
    model.validate()?;
    let report = TrainReport {
        train_loss: model.train_loss,
        val_loss: model.val_loss,
        best_epoch: best.2,
        n_train: train_idx.len(),
        n_val: val_idx.len(),
        val_scenarios,
    };
    Ok((model, report))
}

/// Loss and analytic gradient for a set of normalized examples (used by gradient checks).
pub fn loss_and_gradient(
    params: &[f64],
    xs: &[EncodedPair],
    ys: &[CritScore],
    per_head: bool,
) -> (f64, Vec<f64>) {
    let mut g = vec![0.0; NUM_PARAMS];
    let mut loss = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        loss += backward(params, x, y, per_head, &mut g);
    }
    (loss, g)
}

/// Loss only, for finite differences.
pub fn loss_only(params: &[f64], xs: &[EncodedPair], ys: &[CritScore], per_head: bool) -> f64 {
    xs.iter()
        .zip(ys)
        .map(|(x, y)| loss_of(&forward(params, x).out, y, per_head))
        .sum()
}

/// Randomly initialized parameters (for gradient checks and tests).
pub fn random_params(seed: u64) -> Vec<f64> {
    init_params(seed)
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman(a: &[f64], b: &[f64]) -> f64 {
    fn ranks(v: &[f64]) -> Vec<f64> {
        let mut idx: Vec<usize> = (0..v.len()).collect();
        idx.sort_by(|&i, &j| v[i].total_cmp(&v[j]));
        let mut r = vec![0.0; v.len()];
        let mut i = 0;
        while i < idx.len() {
            let mut j = i;
            while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
                j += 1;
            }
            let avg = (i + j) as f64 / 2.0 + 1.0;
            for k in i..=j {
                r[idx[k]] = avg;
            }
            i = j + 1;
        }
        r
    }
    let (ra, rb) = (ranks(a), ranks(b));
    let n = a.len() as f64;
    let ma = ra.iter().sum::<f64>() / n;
    let mb = rb.iter().sum::<f64>() / n;
    let cov: f64 = ra.iter().zip(&rb).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = ra.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = rb.iter().map(|y| (y - mb).powi(2)).sum();
    if va == 0.0 || vb == 0.0 {
        return 0.0;
    }
    cov / (va * vb).sqrt()
}
