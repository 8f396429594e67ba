//! K-step perturb-and-simulate evaluation protocol.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::ego::EgoParams;
use super::perturb::{perturb_scenario, GeneratorConfig, Models, PerturbParams};
use crate::criticality::{ego_trajectory, EgoHistory};
use crate::error::Result;
use crate::metrics::{aggregate, EpisodeMetrics, MetricsReport};
use crate::rng::{derive_seed, tag};
use crate::scenario::Scenario;
use crate::sim::episode::{run_episode, Outcome, RolloutRecord};
use crate::sim::policy::{AgentPolicy, PolicyBinding};
use crate::sim::IdmParams;

/// Ego behavior under evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum EgoSpec {
    Replay,
    Idm,
    Trainable { params: EgoParams },
}

impl EgoSpec {
    pub fn name(&self) -> &'static str {
        match self {
            EgoSpec::Replay => "replay",
            EgoSpec::Idm => "idm",
            EgoSpec::Trainable { .. } => "trainable",
        }
    }

    pub fn policy(&self, s: &Scenario) -> AgentPolicy {
        match self {
            EgoSpec::Replay => AgentPolicy::Replay(s.ego().clone()),
            EgoSpec::Idm => AgentPolicy::Idm(IdmParams::for_trajectory(s.ego())),
            EgoSpec::Trainable { params } => AgentPolicy::TrainableEgo(*params),
        }
    }
}

/// Background agents replay their logs; ego and adversary get the given policies.
pub fn build_binding(s: &Scenario, ego: AgentPolicy, adversary: AgentPolicy) -> PolicyBinding {
    PolicyBinding::replay_all(s)
        .with(s.ego_id, ego)
        .with(s.adv_id, adversary)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalSettings {
    pub k: usize,
    pub b: f64,
    pub offset: usize,
    pub seed: u64,
}

impl Default for EvalSettings {
    fn default() -> Self {
        Self {
            k: crate::criticality::DEFAULT_K,
            b: crate::criticality::DEFAULT_B,
            offset: crate::skills::DEFAULT_HORIZON,
            seed: 0,
        }
    }
}

/// What happened in one perturb-and-simulate iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationTrace {
    pub iteration: usize,
    /// History entries available to the perturbation.
    pub history_len: usize,
    pub candidate_index: Option<usize>,
    pub switch_step: Option<usize>,
    pub outcome: Outcome,
    pub term_step: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioEvaluation {
    pub scenario_id: String,
    pub iterations: Vec<IterationTrace>,
    /// History length after the last iteration.
    pub final_history_len: usize,
    /// Roll-out of the last iteration; the only one that is reported.
    pub final_record: RolloutRecord,
}

/// Seeds the history with one unperturbed roll-out, then runs `k` iterations of
/// (perturb with the current history, simulate, push the ego roll-out).
pub fn evaluate_scenario(
    s: &Scenario,
    ego: &EgoSpec,
    g: &GeneratorConfig,
    models: &Models,
    st: &EvalSettings,
) -> Result<ScenarioEvaluation> {
    let sid = tag(&s.id);
    let mut history = EgoHistory::new(st.k);
    let seed_run = run_episode(
        s,
        &build_binding(s, ego.policy(s), AgentPolicy::Replay(s.adversary().clone())),
        derive_seed(st.seed, &[tag("seed-rollout"), sid]),
    );
    history.push(ego_trajectory(s, &seed_run)?);
    let mut iterations = Vec::with_capacity(st.k);
    let mut last = None;
    for it in 0..st.k {
        let p = PerturbParams {
            b: st.b,
            offset: st.offset,
            seed: derive_seed(st.seed, &[tag("perturb"), sid, it as u64]),
        };
        let pert = perturb_scenario(s, &history, g, models, &p)?;
        let history_len = history.len();
        let r = run_episode(
            s,
            &build_binding(s, ego.policy(s), pert.policy),
            derive_seed(st.seed, &[tag("episode"), sid, it as u64]),
        );
        history.push(ego_trajectory(s, &r)?);
        iterations.push(IterationTrace {
            iteration: it,
            history_len,
            candidate_index: pert.candidate_index,
            switch_step: pert.switch_step,
            outcome: r.outcome,
            term_step: r.term_step,
        });
        last = Some(r);
    }
    Ok(ScenarioEvaluation {
        scenario_id: s.id.clone(),
        iterations,
        final_history_len: history.len(),
        final_record: last.expect("at least one iteration"),
    })
}

#[derive(Debug, Clone)]
pub struct Evaluation {
    pub report: MetricsReport,
    pub rows: Vec<EpisodeMetrics>,
    pub scenarios: Vec<ScenarioEvaluation>,
}

impl Evaluation {
    pub fn records(&self) -> Vec<RolloutRecord> {
        self.scenarios.iter().map(|e| e.final_record.clone()).collect()
    }
}

/// Evaluates every scenario (in parallel) and aggregates the final roll-outs.
pub fn evaluate(
    run_id: &str,
    scenarios: &[Scenario],
    ego: &EgoSpec,
    g: &GeneratorConfig,
    models: &Models,
    st: &EvalSettings,
) -> Result<Evaluation> {
    models.check(g)?;
    let evals = scenarios
        .par_iter()
        .map(|s| evaluate_scenario(s, ego, g, models, st))
        .collect::<Result<Vec<_>>>()?;
    let records: Vec<RolloutRecord> = evals.iter().map(|e| e.final_record.clone()).collect();
    let (report, rows) = aggregate(run_id, &records, scenarios)?;
    Ok(Evaluation {
        report,
        rows,
        scenarios: evals,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::perturb::GeneratorPreset;
    use crate::scenario::{generate_synthetic, Template};

    #[test]
    fn k_iterations_with_growing_history() {
        let s = generate_synthetic(2, Template::CurveFollow, 1);
        let st = EvalSettings { k: 3, ..Default::default() };
        let g = GeneratorPreset::CatHeuristic.config();
        let e = evaluate_scenario(&s, &EgoSpec::Idm, &g, &Models::default(), &st).unwrap();
        let lens: Vec<usize> = e.iterations.iter().map(|i| i.history_len).collect();
        assert_eq!(lens, [1, 2, 3]);
        assert_eq!(e.final_history_len, 3);
        assert!(e.iterations.iter().all(|i| i.candidate_index.is_some()));
        assert_eq!(e.final_record.outcome, e.iterations[2].outcome);
    }

    #[test]
    fn clean_replay_succeeds() {
        let scenarios: Vec<Scenario> = Template::ALL
            .iter()
            .map(|&t| generate_synthetic(11, t, 2))
            .collect();
        let g = GeneratorPreset::NoAdv.config();
        let e = evaluate("clean", &scenarios, &EgoSpec::Replay, &g, &Models::default(), &EvalSettings::default()).unwrap();
        assert_eq!(e.report.rates.success, 1.0);
        assert_eq!(e.report.n_episodes, 3);
        assert_eq!(e.report.realism.mean, 0.0);
    }
}
