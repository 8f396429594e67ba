//! Acceptance suite. Runs every criterion in order, prints one PASS/FAIL line per
//! criterion with the measured values, and exits non-zero if any criterion fails.
//!
//! Run with `cargo test -p seal-core --test acceptance`.

use std::collections::BTreeMap;
use std::path::Path;
use std::process::ExitCode;
use std::sync::Arc;
use std::f64::consts::PI;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use seal_core::candidates::CandidateSet;
use seal_core::criticality::scorer::{
    argmax_first, encode_pair, loss_and_gradient, loss_only, predict_score, rank_learned, spearman, train_scorer,
    EncodedPair, ScorerModel, NUM_PARAMS,
};
use seal_core::criticality::{build_oracle_corpus, f_coll, f_diff, CorpusEntry, CritScore, EgoHistory};
use seal_core::geometry::{RigidTransform, Vec2};
use seal_core::harness::pipeline::{self, ModelPaths, ScenarioSource, Split, StageContext};
use seal_core::harness::suite::{evaluation_suite, split_80_20, training_suite};
use seal_core::harness::{
    evaluate, evaluate_scenario, train_ego, EgoSpec, Evaluation, GeneratorPreset, Models, RunConfig, RunManifest,
};
use seal_core::metrics::{realism, wasserstein_1d, Histogram, ACC_RANGE, BEHAVIOR_BINS};
use seal_core::scenario::{Footprint, Trajectory, DT};
use seal_core::sim::collision::detect_collision;
use seal_core::sim::episode::{replay_record, AgentRollout, Outcome, RolloutRecord};
use seal_core::sim::kinematics::AgentState;
use seal_core::skills::{build_library, collect_demonstrations, segment_and_label, DemoEpisode, Label, ObsFeature};

struct Line {
    pass: bool,
    detail: String,
}

fn line(pass: bool, detail: String) -> Line {
    Line { pass, detail }
}

fn secs(d: Duration) -> String {
    format!("{:.1} s", d.as_secs_f64())
}

/// Smooth random walk with `n` points starting at global step `start`.
fn random_traj(rng: &mut ChaCha8Rng, start: usize, n: usize) -> Trajectory {
    let mut p = Vec2::new(rng.gen_range(-50.0..50.0), rng.gen_range(-50.0..50.0));
    let mut h: f64 = rng.gen_range(-3.1..3.1);
    let mut v: f64 = rng.gen_range(0.0..15.0);
    let mut pts = Vec::with_capacity(n);
    for _ in 0..n {
        pts.push(p);
        h += rng.gen_range(-0.05..0.05);
        v = (v + rng.gen_range(-0.5..0.5)).clamp(0.0, 20.0);
        p += Vec2::from_angle(h) * (v * DT);
    }
    Trajectory::new(start, pts).unwrap()
}

fn criterion_1() -> Line {
    let t = Instant::now();
    let b = 8.0;
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let (mut range_ok, mut anchor_err, mut diff_self, mut invariance) = (true, 0.0f64, 0.0f64, 0.0f64);
    for _ in 0..1000 {
        let ego = random_traj(&mut rng, 0, 91);
        let adv = random_traj(&mut rng, 10, 81);
        let fc = f_coll(&ego, &adv, b).unwrap();
        let fd = f_diff(&ego, &adv, b).unwrap();
        range_ok &= (0.0..=1.0).contains(&fc) && (0.0..=1.0).contains(&fd);

        // Adversary kept at least `b` away, touching exactly `b` at one random step.
        let touch = rng.gen_range(10..91);
        let pts: Vec<Vec2> = (10..91)
            .map(|s| {
                let d = if s == touch { b } else { b + rng.gen_range(0.0..20.0) };
                ego.at(s).unwrap() + Vec2::from_angle(rng.gen_range(-3.1..3.1)) * d
            })
            .collect();
        let at_b = Trajectory::new(10, pts).unwrap();
        anchor_err = anchor_err.max((f_coll(&ego, &at_b, b).unwrap() - (-1.0f64).exp()).abs());
        diff_self = diff_self.max(f_diff(&ego, &ego, b).unwrap().abs());

        let tf = RigidTransform {
            theta: rng.gen_range(-3.1..3.1),
            offset: Vec2::new(rng.gen_range(-500.0..500.0), rng.gen_range(-500.0..500.0)),
        };
        let (e2, a2) = (ego.transformed(&tf), adv.transformed(&tf));
        invariance = invariance
            .max((f_coll(&e2, &a2, b).unwrap() - fc).abs())
            .max((f_diff(&e2, &a2, b).unwrap() - fd).abs());
    }
    let dt = t.elapsed();
    let pass = range_ok && anchor_err <= 1e-12 && diff_self == 0.0 && invariance <= 1e-9 && dt.as_secs_f64() < 5.0;
    line(
        pass,
        format!(
            "1000 pairs: in [0,1] {range_ok}, |f_coll(d=b) - e^-1| {anchor_err:.1e} (tol 1e-12), f_diff(identical) {diff_self}, rigid-motion error {invariance:.1e} (tol 1e-9), {} (limit 5 s)",
            secs(dt)
        ),
    )
}

fn random_histogram(rng: &mut ChaCha8Rng) -> Histogram {
    let n = rng.gen_range(1..60);
    let (lo, hi) = ACC_RANGE;
    let spread = rng.gen_range(0.5..6.0);
    let mid = rng.gen_range(lo..hi);
    Histogram::from_samples(lo, hi, BEHAVIOR_BINS, (0..n).map(|_| mid + rng.gen_range(-spread..spread)).collect::<Vec<_>>())
}

fn criterion_2() -> Line {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let (mut ident, mut sym, mut tri) = (0.0f64, 0.0f64, 0.0f64);
    for _ in 0..1000 {
        let (p, q, r) = (random_histogram(&mut rng), random_histogram(&mut rng), random_histogram(&mut rng));
        let w = |a: &Histogram, b: &Histogram| wasserstein_1d(a, b).unwrap();
        ident = ident.max(w(&p, &p).abs());
        sym = sym.max((w(&p, &q) - w(&q, &p)).abs());
        tri = tri.max(w(&p, &r) - w(&p, &q) - w(&q, &r));
    }
    let mut replay_max = 0.0f64;
    for s in evaluation_suite() {
        let r = replay_record(&s);
        replay_max = replay_max.max(realism(&r, &s).unwrap().mean);
    }
    let tol = 1e-12;
    let pass = ident <= tol && sym <= tol && tri <= tol && replay_max == 0.0;
    line(
        pass,
        format!(
            "1000 triples: identity {ident:.1e}, symmetry {sym:.1e}, triangle excess {tri:.1e} (tol 1e-12); replay realism max {replay_max} over 50 scenarios"
        ),
    )
}

fn inside(s: &AgentState, p: Vec2) -> bool {
    let l = s.to_local(p);
    l.x.abs() <= s.footprint.length / 2.0 && l.y.abs() <= s.footprint.width / 2.0
}

/// Sampling box for `b` seen from `a`'s frame: `a`'s footprint clipped to the
/// frame-aligned bounds of `b`'s corners. Returns the box and its area.
fn clipped_box(a: &AgentState, b: &AgentState) -> Option<([f64; 4], f64)> {
    let local: Vec<Vec2> = b.corners().iter().map(|c| a.to_local(*c)).collect();
    let (hl, hw) = (a.footprint.length / 2.0, a.footprint.width / 2.0);
    let x0 = local.iter().map(|p| p.x).fold(f64::INFINITY, f64::min).max(-hl);
    let x1 = local.iter().map(|p| p.x).fold(f64::NEG_INFINITY, f64::max).min(hl);
    let y0 = local.iter().map(|p| p.y).fold(f64::INFINITY, f64::min).max(-hw);
    let y1 = local.iter().map(|p| p.y).fold(f64::NEG_INFINITY, f64::max).min(hw);
    (x0 < x1 && y0 < y1).then_some(([x0, x1, y0, y1], (x1 - x0) * (y1 - y0)))
}

/// Monte Carlo containment: any of `n` uniform samples lying inside both footprints.
/// Samples are drawn in whichever box frame gives the smaller clipped region; every
/// common point lies in both regions, so nothing is excluded.
fn mc_overlap(a: &AgentState, b: &AgentState, n: usize, rng: &mut ChaCha8Rng) -> bool {
    let (Some(ra), Some(rb)) = (clipped_box(a, b), clipped_box(b, a)) else {
        return false;
    };
    let (frame, [x0, x1, y0, y1]) = if ra.1 <= rb.1 { (a, ra.0) } else { (b, rb.0) };
    (0..n).any(|_| {
        let l = Vec2::new(rng.gen_range(x0..x1), rng.gen_range(y0..y1));
        let p = frame.position + l.rotate(frame.heading);
        inside(a, p) && inside(b, p)
    })
}

fn criterion_3() -> Line {
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let random_box = |rng: &mut ChaCha8Rng, c: Vec2| AgentState {
        position: c,
        heading: rng.gen_range(-PI..PI),
        speed: rng.gen_range(0.0..10.0),
        footprint: Footprint {
            length: rng.gen_range(3.5..5.5),
            width: rng.gen_range(1.6..2.2),
        },
    };
    let n = 10_000;
    let (mut agree, mut overlaps, mut worst) = (0usize, 0usize, 0.0f64);
    for _ in 0..n {
        let a = random_box(&mut rng, Vec2::new(0.0, 0.0));
        let r = 7.0 * rng.gen::<f64>().sqrt();
        let dir = Vec2::from_angle(rng.gen_range(-PI..PI));
        let b = random_box(&mut rng, dir * r);
        let sat = detect_collision(&a, &b);
        let mc = mc_overlap(&a, &b, 10_000, &mut rng);
        overlaps += sat.is_some() as usize;
        if sat.is_some() == mc {
            agree += 1;
        } else {
            worst = worst.max(sat.map_or(f64::INFINITY, |c| c.penetration));
        }
    }
    let rate = agree as f64 / n as f64;
    let pass = rate >= 0.999 && worst < 1e-3;
    line(
        pass,
        format!(
            "{n} pairs ({overlaps} overlapping): agreement {:.2}% (min 99.9%), largest disagreeing penetration {:.2e} m (limit 1e-3)",
            100.0 * rate,
            worst
        ),
    )
}

fn top1_agreement(model: &ScorerModel, held: &[CorpusEntry]) -> (usize, usize) {
    let mut agree = 0;
    let mut n = 0;
    for chunk in held.chunk_by(|a, b| a.scenario_id == b.scenario_id) {
        let set = CandidateSet {
            scenario_id: chunk[0].scenario_id.clone(),
            seed: 0,
            candidates: chunk.iter().map(|e| e.candidate.clone()).collect(),
        };
        let mut h = EgoHistory::new(1);
        h.push(chunk[0].ego_prev.clone());
        let (pick, _) = rank_learned(model, &set, &h).unwrap();
        let oracle: Vec<f64> = chunk.iter().map(|e| e.score().sum()).collect();
        agree += (pick == argmax_first(&oracle)) as usize;
        n += 1;
    }
    (agree, n)
}

fn gradient_check(model: &ScorerModel, held: &[CorpusEntry]) -> f64 {
    let xs: Vec<EncodedPair> = held.iter().step_by(37).take(8).map(|e| encode_pair(&e.ego_prev, &e.candidate)).collect();
    let ys: Vec<CritScore> = held.iter().step_by(37).take(8).map(CorpusEntry::score).collect();
    let p = &model.params;
    let (_, g) = loss_and_gradient(p, &xs, &ys, false);
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let k = rng.gen_range(0..NUM_PARAMS);
        let h = 1e-6;
        let mut pp = p.clone();
        pp[k] += h;
        let lp = loss_only(&pp, &xs, &ys, false);
        pp[k] -= 2.0 * h;
        let lm = loss_only(&pp, &xs, &ys, false);
        let fd = (lp - lm) / (2.0 * h);
        worst = worst.max((fd - g[k]).abs() / fd.abs().max(g[k].abs()).max(1e-7));
    }
    worst
}

struct Trained {
    models: Models,
    train: Vec<seal_core::scenario::Scenario>,
}

fn criterion_4(cfg: &RunConfig) -> (Line, Trained) {
    let all = training_suite(cfg.suite.train_count);
    let (train, held) = split_80_20(&all);
    let t = Instant::now();
    let corpus = build_oracle_corpus(&train, cfg.seed, cfg.b).unwrap();
    let held_corpus = build_oracle_corpus(&held, cfg.seed, cfg.b).unwrap();
    let corpus_time = t.elapsed();
    let t = Instant::now();
    let (model, _) = train_scorer(&corpus, cfg.seed, &cfg.scorer).unwrap();
    let train_time = t.elapsed();

    let pred: Vec<f64> = held_corpus.iter().map(|e| predict_score(&model, &e.ego_prev, &e.candidate).sum()).collect();
    let oracle: Vec<f64> = held_corpus.iter().map(|e| e.score().sum()).collect();
    let rho = spearman(&pred, &oracle);
    let (agree, n) = top1_agreement(&model, &held_corpus);
    let top1 = agree as f64 / n as f64;
    let grad = gradient_check(&model, &held_corpus);
    let pass = rho >= 0.8 && top1 >= 0.6 && grad < 1e-4 && train_time.as_secs_f64() < 300.0 && train.len() >= 200;
    let l = line(
        pass,
        format!(
            "{} train / {} held-out scenarios x 32 candidates: Spearman {rho:.3} (min 0.8), top-1 {agree}/{n} = {:.0}% (min 60%), gradient rel err {grad:.1e} (limit 1e-4), training {} (limit 300 s; corpus {})",
            train.len(),
            held.len(),
            100.0 * top1,
            secs(train_time),
            secs(corpus_time)
        ),
    );

    let demos = collect_demonstrations(&train, cfg.seed).unwrap();
    let segments = segment_and_label(&demos, cfg.horizon).unwrap();
    let library = build_library(&segments, cfg.clusters, cfg.seed).unwrap();
    let models = Models {
        scorer: Some(Arc::new(model)),
        library: Some(Arc::new(library)),
    };
    (l, Trained { models, train })
}

fn random_rollout(rng: &mut ChaCha8Rng) -> AgentRollout {
    let start_step = rng.gen_range(0..15);
    let n = rng.gen_range(2..70);
    let mut offroad = Vec::with_capacity(n);
    let mut cur = rng.gen_bool(0.1);
    for _ in 0..n {
        if rng.gen_bool(0.08) {
            cur = !cur;
        }
        offroad.push(cur);
    }
    let n_actions = if rng.gen_bool(0.8) { n - 1 } else { rng.gen_range(0..n) };
    AgentRollout {
        start_step,
        xy: (0..n).map(|i| Vec2::new(i as f64, 0.0)).collect(),
        heading: vec![0.0; n],
        speed: vec![1.0; n],
        actions: (0..n_actions).map(|_| [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)]).collect(),
        offroad,
        collision_step: if rng.gen_bool(0.5) { Some(rng.gen_range(0..start_step + n + 5)) } else { None },
    }
}

fn random_corpus(rng: &mut ChaCha8Rng) -> Vec<DemoEpisode> {
    (0..rng.gen_range(1..4))
        .map(|e| {
            let mut agents = BTreeMap::new();
            let mut obs = BTreeMap::new();
            for id in 0..rng.gen_range(1..5u32) {
                let a = random_rollout(rng);
                if rng.gen_bool(0.9) {
                    let m = if rng.gen_bool(0.8) { a.len() } else { rng.gen_range(0..=a.len()) };
                    let feats = (0..m).map(|_| ObsFeature(std::array::from_fn(|_| rng.gen_range(-1.0..1.0)))).collect();
                    obs.insert(id, feats);
                }
                agents.insert(id, a);
            }
            let record = RolloutRecord {
                scenario_id: format!("corpus-{e}"),
                seed: 0,
                ego_id: 0,
                adv_id: 0,
                outcome: Outcome::Success,
                term_step: 0,
                agents,
                contact: None,
            };
            DemoEpisode { record, obs }
        })
        .collect()
}

/// Brute-force window rule: every offset that is a multiple of the stride and leaves a
/// full window of actions and a start observation, labeled by scanning the 2H steps
/// after the start for an off-road onset, then for the agent's own collision.
fn oracle_segments(corpus: &[DemoEpisode], h: usize) -> Vec<(String, u32, usize, Label, Vec<[f64; 2]>, ObsFeature)> {
    let stride = std::cmp::max(1, h / 2);
    let mut out = Vec::new();
    for ep in corpus {
        for (&id, a) in &ep.record.agents {
            let Some(obs) = ep.obs.get(&id) else { continue };
            for i in (0..a.actions.len()).filter(|i| i % stride == 0) {
                if i + h > a.actions.len() || i >= obs.len() {
                    continue;
                }
                let s = a.start_step + i;
                let onset = |t: usize| {
                    let Some(k) = t.checked_sub(a.start_step) else { return false };
                    k < a.offroad.len() && a.offroad[k] && (k == 0 || !a.offroad[k - 1])
                };
                let window = s + 1..=s + 2 * h;
                let label = if window.clone().any(onset) {
                    Label::Excluded
                } else if a.collision_step.is_some_and(|c| window.contains(&c)) {
                    Label::Adversarial
                } else {
                    Label::Benign
                };
                out.push((ep.record.scenario_id.clone(), id, s, label, a.actions[i..i + h].to_vec(), obs[i]));
            }
        }
    }
    out
}

fn criterion_5() -> Line {
    let mut rng = ChaCha8Rng::seed_from_u64(505);
    let (mut matched, mut segments, mut adversarial) = (0usize, 0usize, 0usize);
    for c in 0..100 {
        let corpus = random_corpus(&mut rng);
        let h = if c % 2 == 0 { 10 } else { [1, 2, 3, 5, 7][c / 2 % 5] };
        let got: Vec<_> = segment_and_label(&corpus, h)
            .unwrap()
            .into_iter()
            .map(|s| {
                let acts = s.actions.iter().map(|a| [a.steer, a.accel]).collect::<Vec<_>>();
                (s.source.scenario_id, s.source.agent_id, s.source.start_step, s.label, acts, s.obs_start)
            })
            .collect();
        let want = oracle_segments(&corpus, h);
        segments += want.len();
        adversarial += want.iter().filter(|w| w.3 == Label::Adversarial).count();
        matched += (got == want) as usize;
    }

    // The 2H window for H = 10: a collision at step c marks starts c-20 ..= c-1.
    let a = AgentRollout {
        start_step: 0,
        xy: vec![Vec2::new(0.0, 0.0); 61],
        heading: vec![0.0; 61],
        speed: vec![0.0; 61],
        actions: vec![[0.0, 0.0]; 60],
        offroad: vec![false; 61],
        collision_step: Some(45),
    };
    let ep = DemoEpisode {
        record: RolloutRecord {
            scenario_id: "window".into(),
            seed: 0,
            ego_id: 0,
            adv_id: 0,
            outcome: Outcome::Crash,
            term_step: 45,
            agents: BTreeMap::from([(0, a)]),
            contact: None,
        },
        obs: BTreeMap::from([(0, vec![ObsFeature([0.0; 9]); 61])]),
    };
    let adv: Vec<usize> = segment_and_label(&[ep], 10)
        .unwrap()
        .iter()
        .filter(|s| s.label == Label::Adversarial)
        .map(|s| s.source.start_step)
        .collect();
    let window_ok = adv == vec![25, 30, 35, 40];
    line(
        matched == 100 && window_ok,
        format!(
            "{matched}/100 random corpora match the oracle exactly ({segments} segments, {adversarial} adversarial); collision at 45 with H=10 labels starts {adv:?}"
        ),
    )
}

fn eval(ego: &EgoSpec, g: GeneratorPreset, models: &Models, cfg: &RunConfig) -> Evaluation {
    evaluate(g.name(), &evaluation_suite(), ego, &g.config(), models, &cfg.eval_settings()).unwrap()
}

fn criterion_6(models: &Models, cfg: &RunConfig) -> (Line, Evaluation) {
    let t = Instant::now();
    let seal = eval(&EgoSpec::Replay, GeneratorPreset::Seal, models, cfg);
    let dt = t.elapsed();
    let clean = eval(&EgoSpec::Replay, GeneratorPreset::NoAdv, models, cfg);
    let (s, c) = (seal.report.rates.success, clean.report.rates.success);
    let l = line(
        s <= 0.5 * c && dt.as_secs_f64() < 180.0,
        format!(
            "replay ego, 50 scenarios: success seal {s:.2} vs no-adv {c:.2} (need <= {:.2}), seal crash {:.2}, seal run {} (limit 180 s)",
            0.5 * c,
            seal.report.rates.crash,
            secs(dt)
        ),
    );
    (l, seal)
}

fn criterion_7(models: &Models, cfg: &RunConfig, seal_replay: &Evaluation) -> Line {
    let mut rows = Vec::new();
    let mut sums = [[0.0; 2]; 2];
    for (i, g) in [GeneratorPreset::Seal, GeneratorPreset::CatHeuristic].into_iter().enumerate() {
        for ego in [EgoSpec::Replay, EgoSpec::Idm] {
            let e = if g == GeneratorPreset::Seal && ego == EgoSpec::Replay {
                seal_replay.report.clone()
            } else {
                eval(&ego, g, models, cfg).report
            };
            sums[i][0] += e.realism.mean / 2.0;
            sums[i][1] += e.collision.mean_vel / 2.0;
            rows.push(format!("{}/{} {:.3}/{:.2}", g.name(), ego.name(), e.realism.mean, e.collision.mean_vel));
        }
    }
    let [[rs, vs], [rc, vc]] = sums;
    line(
        rs < rc && vs < vc,
        format!(
            "mean over replay+idm: realism WD seal {rs:.3} < cat {rc:.3}, collision velocity seal {vs:.2} < cat {vc:.2} m/s [{}]",
            rows.join(", ")
        ),
    )
}

fn criterion_8(t: &Trained, cfg: &RunConfig) -> Line {
    let start = Instant::now();
    let mut success = Vec::new();
    for g in [GeneratorPreset::Seal, GeneratorPreset::NoAdv] {
        let r = train_ego(&t.train, &g.config(), &t.models, &cfg.cem, &cfg.ego_bounds, &cfg.train_settings()).unwrap();
        let e = eval(&EgoSpec::Trainable { params: r.params }, GeneratorPreset::Seal, &t.models, cfg);
        success.push((e.report.rates.success, r.selected_generation));
    }
    let dt = start.elapsed();
    let ((s, gs), (n, gn)) = (success[0], success[1]);
    line(
        s >= n && dt.as_secs_f64() < 900.0,
        format!(
            "held-out seal suite success: seal-trained {s:.2} (generation {gs}) >= no-adv-trained {n:.2} (generation {gn}); both runs {} (limit 900 s)",
            secs(dt)
        ),
    )
}

fn criterion_9(models: &Models, cfg: &RunConfig) -> Line {
    let st = cfg.eval_settings();
    let g = GeneratorPreset::Seal.config();
    let mut ok = 0;
    let scenarios: Vec<_> = evaluation_suite().into_iter().take(10).collect();
    for s in &scenarios {
        let e = evaluate_scenario(s, &EgoSpec::Idm, &g, models, &st).unwrap();
        let lens: Vec<usize> = e.iterations.iter().map(|i| i.history_len).collect();
        let last = e.iterations.last().unwrap();
        let conforms = e.iterations.len() == 5
            && lens == [1, 2, 3, 4, 5]
            && e.final_history_len == 5
            && e.iterations.iter().enumerate().all(|(k, i)| i.iteration == k)
            && e.final_record.outcome == last.outcome
            && e.final_record.term_step == last.term_step;
        ok += conforms as usize;
    }
    let mut q = EgoHistory::new(cfg.k);
    let mut bounded = true;
    let mut rng = ChaCha8Rng::seed_from_u64(909);
    for _ in 0..20 {
        q.push(random_traj(&mut rng, 0, 91));
        bounded &= q.len() <= 5;
    }
    let full = evaluate("protocol", &scenarios, &EgoSpec::Idm, &g, models, &st).unwrap();
    let reports_final = full.scenarios.iter().all(|e| {
        full.rows
            .iter()
            .filter(|r| r.scenario_id == e.scenario_id)
            .map(|r| r.outcome)
            .eq([e.final_record.outcome])
    });
    line(
        ok == scenarios.len() && bounded && q.len() == 5 && reports_final,
        format!(
            "{ok}/{} scenarios ran exactly 5 iterations with history lengths 1..5 and reported the last roll-out; queue capped at {} after 20 pushes; report rows use final roll-outs {reports_final}",
            scenarios.len(),
            q.len()
        ),
    )
}

const SMALL: &str = r#"
seed = 3
clusters = 4

[suite]
train_count = 20

[scorer]
epochs = 2

[cem]
population = 4
elite = 2
generations = 2
batch = 2
final_batch = 2
"#;

/// Runs every stage into `root` and returns each stage's recorded output digests.
fn run_pipeline(root: &Path) -> Vec<(String, Vec<(String, String)>)> {
    let config = RunConfig::from_toml(SMALL).unwrap();
    let ctx = |name: &str| StageContext {
        out: root.join(name),
        config: config.clone(),
        config_path: None,
        command: name.to_string(),
        args: Vec::new(),
    };
    let scen = ScenarioSource::Manifest(root.join("scen/scenarios.txt"));
    let models = ModelPaths {
        scorer: Some(root.join("scorer")),
        skills: Some(root.join("skills")),
    };
    let mut eval_ctx = ctx("evaluate");
    eval_ctx.config.generator = GeneratorPreset::Seal;
    let manifests: Vec<RunManifest> = vec![
        pipeline::gen_scenarios(&ctx("scen"), 20, 2).unwrap(),
        pipeline::collect_demos(&ctx("demos"), &scen, Split::Train).unwrap(),
        pipeline::build_skills(&ctx("skills"), &root.join("demos")).unwrap(),
        pipeline::gen_corpus(&ctx("corpus"), &scen, Split::Train).unwrap(),
        pipeline::train_scorer_stage(&ctx("scorer"), &root.join("corpus/corpus.jsonl")).unwrap(),
        {
            let mut c = ctx("ego");
            c.config.generator = GeneratorPreset::Seal;
            pipeline::train_ego_stage(&c, &scen, Split::Train, &models).unwrap()
        },
        pipeline::evaluate_stage(
            &eval_ctx,
            &scen,
            Split::HeldOut,
            pipeline::EgoKind::Trainable,
            Some(&root.join("ego")),
            &models,
        )
        .unwrap(),
        pipeline::report(&ctx("report"), &[root.join("evaluate")]).unwrap(),
    ];
    manifests
        .into_iter()
        .map(|m| {
            let outputs = m.outputs.iter().map(|f| (f.path.display().to_string(), f.sha256.clone())).collect();
            (m.command, outputs)
        })
        .collect()
}

fn in_pool<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> T {
    rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap().install(f)
}

fn criterion_10(models: &Models, cfg: &RunConfig, seal_replay: &Evaluation) -> Line {
    let dirs: Vec<tempfile::TempDir> = (0..2).map(|_| tempfile::tempdir().unwrap()).collect();
    let one = in_pool(1, || run_pipeline(dirs[0].path()));
    let four = in_pool(4, || run_pipeline(dirs[1].path()));
    let stages = one.len();
    let files: usize = one.iter().map(|(_, o)| o.len()).sum();
    let identical = one == four;

    let json = |e: &Evaluation| {
        let records: Vec<String> = e.records().iter().map(RolloutRecord::to_json_line).collect();
        (e.report.to_json(), records)
    };
    let serial = in_pool(1, || eval(&EgoSpec::Replay, GeneratorPreset::Seal, models, cfg));
    let parallel = in_pool(4, || eval(&EgoSpec::Replay, GeneratorPreset::Seal, models, cfg));
    let eval_same = json(&serial) == json(&parallel) && json(&serial) == json(seal_replay);
    line(
        identical && eval_same,
        format!(
            "{stages} stages, {files} output files: digests identical under 1 and 4 threads {identical}; full seal evaluation JSON identical across 1, 4 and default threads {eval_same}"
        ),
    )
}

fn main() -> ExitCode {
    // `cargo test` passes harness flags such as `--nocapture`; a name filter selects nothing.
    let args: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    if args.iter().any(|a| !"acceptance".contains(a.as_str())) {
        return ExitCode::SUCCESS;
    }
    let cfg = RunConfig::default();
    let total = Instant::now();
    let mut results: Vec<(u32, &str, Line)> = Vec::new();
    let mut report = |id: u32, name: &'static str, l: Line| {
        println!("[{}] {id:>2} {name}: {}", if l.pass { "PASS" } else { "FAIL" }, l.detail);
        results.push((id, name, l));
    };
    report(1, "analytic scores", criterion_1());
    report(2, "metric axioms", criterion_2());
    report(3, "geometry oracle", criterion_3());
    let (l4, trained) = criterion_4(&cfg);
    report(4, "scorer fidelity", l4);
    report(5, "skill labeling oracle", criterion_5());
    let (l6, seal_replay) = criterion_6(&trained.models, &cfg);
    report(6, "adversarial efficacy", l6);
    report(7, "realism ordering", criterion_7(&trained.models, &cfg, &seal_replay));
    report(8, "closed-loop improvement", criterion_8(&trained, &cfg));
    report(9, "protocol conformance", criterion_9(&trained.models, &cfg));
    report(10, "determinism", criterion_10(&trained.models, &cfg, &seal_replay));
    let failed: Vec<u32> = results.iter().filter(|r| !r.2.pass).map(|r| r.0).collect();
    println!(
        "acceptance: {}/{} criteria passed in {}",
        results.len() - failed.len(),
        results.len(),
        secs(total.elapsed())
    );
    if failed.is_empty() {
        ExitCode::SUCCESS
    } else {
        println!("failed criteria: {failed:?}");
        ExitCode::FAILURE
    }
}
