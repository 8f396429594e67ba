//! Cross-entropy-method training of the parameterized ego under a perturbation
//! curriculum.

use rand::seq::index::sample;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::ego::{EgoParamBounds, EgoParams, EGO_PARAM_DIM};
use super::evaluate::{build_binding, evaluate_scenario, EgoSpec, EvalSettings};
use super::perturb::{perturb_scenario, GeneratorConfig, Models, PerturbParams};
use crate::criticality::{ego_trajectory, EgoHistory};
use crate::error::{Error, Result};
use crate::rng::{derive_seed, stream, tag};
use crate::scenario::Scenario;
use crate::sim::episode::{run_episode, Outcome};
use crate::sim::policy::AgentPolicy;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Curriculum {
    /// Perturbation probability ramps linearly from 0 to `max_p` over the generations.
    Linear { max_p: f64 },
    /// Constant perturbation probability.
    Fixed { p: f64 },
}

impl Default for Curriculum {
    fn default() -> Self {
        Curriculum::Linear { max_p: 0.9 }
    }
}

impl Curriculum {
    pub fn probability(&self, generation: usize, generations: usize) -> f64 {
        match *self {
            Curriculum::Linear { max_p } => {
                if generations <= 1 {
                    max_p
                } else {
                    max_p * generation as f64 / (generations - 1) as f64
                }
            }
            Curriculum::Fixed { p } => p,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitnessWeights {
    pub success: f64,
    pub crash: f64,
    pub offroad: f64,
}

impl Default for FitnessWeights {
    fn default() -> Self {
        Self {
            success: 1.0,
            crash: -0.5,
            offroad: -0.5,
        }
    }
}

impl FitnessWeights {
    pub fn score(&self, o: Outcome) -> f64 {
        match o {
            Outcome::Success => self.success,
            Outcome::Crash => self.crash,
            Outcome::OutOfRoad => self.offroad,
            Outcome::Timeout => 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CemConfig {
    pub population: usize,
    pub elite: usize,
    pub generations: usize,
    /// Scenarios per fitness evaluation.
    pub batch: usize,
    /// Scenarios in the final protocol evaluation of each generation's best.
    pub final_batch: usize,
    /// Initial sampling std as a fraction of each parameter's range.
    pub init_std: f64,
    /// Std floor as a fraction of each parameter's range.
    pub min_std: f64,
    pub fitness: FitnessWeights,
    pub curriculum: Curriculum,
}

impl Default for CemConfig {
    fn default() -> Self {
        Self {
            population: 32,
            elite: 8,
            generations: 20,
            batch: 32,
            final_batch: 64,
            init_std: 0.25,
            min_std: 0.02,
            fitness: FitnessWeights::default(),
            curriculum: Curriculum::default(),
        }
    }
}

impl CemConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.population >= 1
            && (1..=self.population).contains(&self.elite)
            && self.generations >= 1
            && self.batch >= 1
            && self.final_batch >= 1
            && self.init_std > 0.0
            && self.min_std >= 0.0;
        let p_ok = match self.curriculum {
            Curriculum::Linear { max_p } => (0.0..=1.0).contains(&max_p),
            Curriculum::Fixed { p } => (0.0..=1.0).contains(&p),
        };
        if ok && p_ok {
            Ok(())
        } else {
            Err(Error::Config("invalid CEM configuration".into()))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationLog {
    pub generation: usize,
    pub perturb_probability: f64,
    pub perturbed: usize,
    pub mean_fitness: f64,
    pub best_fitness: f64,
    pub best_params: EgoParams,
    pub mean_params: EgoParams,
    /// Fitness of this generation's best under the evaluation protocol on the common final batch.
    pub final_fitness: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainResult {
    pub params: EgoParams,
    pub fitness: f64,
    pub selected_generation: usize,
    pub log: Vec<GenerationLog>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainSettings {
    pub k: usize,
    pub b: f64,
    pub offset: usize,
    pub seed: u64,
}

/// One scenario prepared for a batch: the adversary policy is shared by every sample.
struct Prepared<'a> {
    scenario: &'a Scenario,
    adversary: AgentPolicy,
    perturbed: bool,
    seed: u64,
}

fn prepare<'a>(
    scenarios: &'a [Scenario],
    idx: &[usize],
    histories: &[EgoHistory],
    p: f64,
    g: &GeneratorConfig,
    models: &Models,
    st: &TrainSettings,
    rng: &mut ChaCha8Rng,
    round: u64,
) -> Result<Vec<Prepared<'a>>> {
    let flags: Vec<bool> = idx.iter().map(|_| rng.gen_bool(p)).collect();
    idx.par_iter()
        .zip(flags)
        .map(|(&i, perturbed)| {
            let s = &scenarios[i];
            let sid = tag(&s.id);
            let adversary = if perturbed && g.perturb && !histories[i].is_empty() {
                let pp = PerturbParams {
                    b: st.b,
                    offset: st.offset,
                    seed: derive_seed(st.seed, &[tag("train-perturb"), sid, round]),
                };
                perturb_scenario(s, &histories[i], g, models, &pp)?.policy
            } else {
                AgentPolicy::Replay(s.adversary().clone())
            };
            Ok(Prepared {
                scenario: s,
                adversary,
                perturbed: perturbed && g.perturb,
                seed: derive_seed(st.seed, &[tag("train-episode"), sid, round]),
            })
        })
        .collect()
}

fn fitness_on(params: &EgoParams, batch: &[Prepared<'_>], w: &FitnessWeights) -> (f64, Vec<crate::sim::RolloutRecord>) {
    let mut total = 0.0;
    let mut records = Vec::with_capacity(batch.len());
    for b in batch {
        let binding = build_binding(b.scenario, AgentPolicy::TrainableEgo(*params), b.adversary.clone());
        let r = run_episode(b.scenario, &binding, b.seed);
        total += w.score(r.outcome);
        records.push(r);
    }
    (total / batch.len() as f64, records)
}

fn sample_params(mean: &[f64; EGO_PARAM_DIM], std: &[f64; EGO_PARAM_DIM], bounds: &EgoParamBounds, rng: &mut ChaCha8Rng) -> EgoParams {
    let mut v = [0.0; EGO_PARAM_DIM];
    for i in 0..EGO_PARAM_DIM {
        // Box-Muller from two uniforms keeps the stream platform independent.
        let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
        let u2: f64 = rng.gen();
        let z = (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos();
        v[i] = (mean[i] + std[i] * z).clamp(bounds.lower[i], bounds.upper[i]);
    }
    EgoParams::from_vec(v)
}

/// Seeds empty histories with an unperturbed roll-out of `params`.
fn seed_histories(scenarios: &[Scenario], histories: &mut [EgoHistory], params: &EgoParams, seed: u64) -> Result<()> {
    let runs: Vec<Option<crate::scenario::Trajectory>> = scenarios
        .par_iter()
        .zip(histories.par_iter())
        .map(|(s, h)| {
            if !h.is_empty() {
                return Ok(None);
            }
            let binding = build_binding(s, AgentPolicy::TrainableEgo(*params), AgentPolicy::Replay(s.adversary().clone()));
            let r = run_episode(s, &binding, derive_seed(seed, &[tag("train-seed-rollout"), tag(&s.id)]));
            Ok(Some(ego_trajectory(s, &r)?))
        })
        .collect::<Result<_>>()?;
    for (h, r) in histories.iter_mut().zip(runs) {
        if let Some(t) = r {
            h.push(t);
        }
    }
    Ok(())
}

/// CEM search over ego parameters. Each generation samples a batch of training
/// scenarios, perturbs each with the curriculum probability (shared across the
/// population), scores every sample, refits the sampling distribution to the elite, and
/// pushes the generation-best's roll-outs into the per-scenario histories. Finally every
/// generation's best is re-scored on one common batch and the top one is returned.
pub fn train_ego(
    scenarios: &[Scenario],
    g: &GeneratorConfig,
    models: &Models,
    cem: &CemConfig,
    bounds: &EgoParamBounds,
    st: &TrainSettings,
) -> Result<TrainResult> {
    cem.validate()?;
    if !bounds.is_valid() {
        return Err(Error::Config("invalid ego parameter bounds".into()));
    }
    if scenarios.is_empty() {
        return Err(Error::InvalidInput("no training scenarios".into()));
    }
    models.check(g)?;
    let mut mean = bounds.clamp(&EgoParams::default()).to_vec();
    let mut std = [0.0; EGO_PARAM_DIM];
    for i in 0..EGO_PARAM_DIM {
        std[i] = cem.init_std * (bounds.upper[i] - bounds.lower[i]);
    }
    let mut histories: Vec<EgoHistory> = scenarios.iter().map(|_| EgoHistory::new(st.k)).collect();
    let mut best_prev: Option<EgoParams> = None;
    let mut log = Vec::with_capacity(cem.generations);
    let batch_size = cem.batch.min(scenarios.len());

    for gen in 0..cem.generations {
        let mut rng = stream(st.seed, &[tag("cem"), gen as u64]);
        let p = cem.curriculum.probability(gen, cem.generations);
        let pop: Vec<EgoParams> = (0..cem.population)
            .map(|i| match (i, best_prev) {
                (0, Some(b)) => b,
                _ => sample_params(&mean, &std, bounds, &mut rng),
            })
            .collect();
        let idx: Vec<usize> = sample(&mut rng, scenarios.len(), batch_size).into_vec();
        seed_histories(scenarios, &mut histories, &EgoParams::from_vec(mean), st.seed)?;
        let batch = prepare(scenarios, &idx, &histories, p, g, models, st, &mut rng, gen as u64)?;
        let results: Vec<(f64, Vec<crate::sim::RolloutRecord>)> =
            pop.par_iter().map(|x| fitness_on(x, &batch, &cem.fitness)).collect();

        let mut order: Vec<usize> = (0..pop.len()).collect();
        order.sort_by(|&a, &b| results[b].0.total_cmp(&results[a].0).then(a.cmp(&b)));
        let elite: Vec<[f64; EGO_PARAM_DIM]> = order[..cem.elite].iter().map(|&i| pop[i].to_vec()).collect();
        for d in 0..EGO_PARAM_DIM {
            let m = elite.iter().map(|e| e[d]).sum::<f64>() / elite.len() as f64;
            let var = elite.iter().map(|e| (e[d] - m).powi(2)).sum::<f64>() / elite.len() as f64;
            mean[d] = m;
            std[d] = var.sqrt().max(cem.min_std * (bounds.upper[d] - bounds.lower[d]));
        }
        let best = order[0];
        for (b, r) in batch.iter().zip(&results[best].1) {
            let i = scenarios.iter().position(|s| std::ptr::eq(s, b.scenario)).unwrap();
            histories[i].push(ego_trajectory(b.scenario, r)?);
        }
        best_prev = Some(pop[best]);
        log.push(GenerationLog {
            generation: gen,
            perturb_probability: p,
            perturbed: batch.iter().filter(|b| b.perturbed).count(),
            mean_fitness: results.iter().map(|r| r.0).sum::<f64>() / results.len() as f64,
            best_fitness: results[best].0,
            best_params: pop[best],
            mean_params: EgoParams::from_vec(mean),
            final_fitness: f64::NAN,
        });
    }

    // Every generation's best runs the evaluation protocol (own history, K perturbation
    // iterations) on one common batch; the best of these is returned.
    let mut rng = stream(st.seed, &[tag("cem-final")]);
    let idx: Vec<usize> = sample(&mut rng, scenarios.len(), cem.final_batch.min(scenarios.len())).into_vec();
    let eval = EvalSettings {
        k: st.k,
        b: st.b,
        offset: st.offset,
        seed: derive_seed(st.seed, &[tag("cem-final")]),
    };
    let finals: Vec<f64> = log
        .par_iter()
        .map(|l| {
            let ego = EgoSpec::Trainable { params: l.best_params };
            let mut total = 0.0;
            for &i in &idx {
                let r = evaluate_scenario(&scenarios[i], &ego, g, models, &eval)?;
                total += cem.fitness.score(r.final_record.outcome);
            }
            Ok(total / idx.len() as f64)
        })
        .collect::<Result<_>>()?;
    let mut selected = 0;
    for (i, f) in finals.iter().enumerate() {
        log[i].final_fitness = *f;
        if *f > finals[selected] {
            selected = i;
        }
    }
    Ok(TrainResult {
        params: log[selected].best_params,
        fitness: finals[selected],
        selected_generation: selected,
        log,
    })
}
