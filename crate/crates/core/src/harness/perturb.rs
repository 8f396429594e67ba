//! Scenario perturbation: candidate sampling, ranking and adversary assignment.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::candidates::sample_candidates;
use crate::criticality::{
    adversary_with, oracle_score, rank_heuristic_cat, rank_learned, scorer::argmax_first, EgoHistory,
    ScorerModel,
};
use crate::error::{Error, Result};
use crate::scenario::Scenario;
use crate::sim::policy::AgentPolicy;
use crate::skills::adversary::{AdversarySpec, NEVER};
use crate::skills::{compute_switch_step, PriorMode, SkillLibrary};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Objective {
    /// Learned scorer averaged over the ego history.
    Learned,
    /// Bounding-box overlap heuristic.
    Heuristic,
    /// Simulated oracle scores against the reactive heuristic ego.
    Oracle,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AdversaryKind {
    AdvSkills,
    BenignSkills,
    /// Non-reactive: replays the selected candidate.
    Replay,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SwitchRule {
    /// Fixed offset before the anticipated risk step.
    Offset,
    /// Skills from the first step (no non-reactive start).
    Zero,
    /// Never switch to skills.
    Never,
}

/// How base scenarios are perturbed. `perturb = false` leaves the recorded scenario as is.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GeneratorConfig {
    pub perturb: bool,
    pub objective: Objective,
    pub adversary: AdversaryKind,
    pub switch: SwitchRule,
}

/// Named generator presets, including the ablation variants.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GeneratorPreset {
    Seal,
    CatHeuristic,
    NoAdv,
    /// Learned objective with a trajectory-following adversary.
    LearnedObj,
    /// Heuristic objective with adversarial skills.
    HeuristicObj,
    /// Learned objective, adversarial-prior skills (the full pipeline).
    AdvSkillPrior,
    /// Learned objective, benign-prior skills.
    BenignSkillPrior,
    /// Heuristic objective with a trajectory-following adversary.
    TrajpredAdv,
    /// Full pipeline with skills from the first step.
    NoNonReactiveStart,
}

impl GeneratorPreset {
    pub const ALL: [GeneratorPreset; 9] = [
        GeneratorPreset::Seal,
        GeneratorPreset::CatHeuristic,
        GeneratorPreset::NoAdv,
        GeneratorPreset::LearnedObj,
        GeneratorPreset::HeuristicObj,
        GeneratorPreset::AdvSkillPrior,
        GeneratorPreset::BenignSkillPrior,
        GeneratorPreset::TrajpredAdv,
        GeneratorPreset::NoNonReactiveStart,
    ];

    pub fn name(self) -> &'static str {
        match self {
            GeneratorPreset::Seal => "seal",
            GeneratorPreset::CatHeuristic => "cat-heuristic",
            GeneratorPreset::NoAdv => "no-adv",
            GeneratorPreset::LearnedObj => "learned-obj",
            GeneratorPreset::HeuristicObj => "heuristic-obj",
            GeneratorPreset::AdvSkillPrior => "adv-skill-prior",
            GeneratorPreset::BenignSkillPrior => "benign-skill-prior",
            GeneratorPreset::TrajpredAdv => "trajpred-adv",
            GeneratorPreset::NoNonReactiveStart => "no-non-reactive-start",
        }
    }

    pub fn config(self) -> GeneratorConfig {
        use AdversaryKind::*;
        use Objective::*;
        let g = |objective, adversary, switch| GeneratorConfig {
            perturb: true,
            objective,
            adversary,
            switch,
        };
        match self {
            GeneratorPreset::Seal | GeneratorPreset::AdvSkillPrior => g(Learned, AdvSkills, SwitchRule::Offset),
            GeneratorPreset::CatHeuristic | GeneratorPreset::TrajpredAdv => {
                g(Heuristic, Replay, SwitchRule::Never)
            }
            GeneratorPreset::NoAdv => GeneratorConfig {
                perturb: false,
                ..g(Learned, Replay, SwitchRule::Never)
            },
            GeneratorPreset::LearnedObj => g(Learned, Replay, SwitchRule::Never),
            GeneratorPreset::HeuristicObj => g(Heuristic, AdvSkills, SwitchRule::Offset),
            GeneratorPreset::BenignSkillPrior => g(Learned, BenignSkills, SwitchRule::Offset),
            GeneratorPreset::NoNonReactiveStart => g(Learned, AdvSkills, SwitchRule::Zero),
        }
    }
}

impl fmt::Display for GeneratorPreset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for GeneratorPreset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        GeneratorPreset::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown generator `{s}`")))
    }
}

impl GeneratorConfig {
    pub fn needs_scorer(&self) -> bool {
        self.perturb && self.objective == Objective::Learned
    }

    pub fn needs_library(&self) -> bool {
        self.perturb && self.adversary != AdversaryKind::Replay
    }
}

/// Trained artifacts the generator may need.
#[derive(Debug, Clone, Default)]
pub struct Models {
    pub scorer: Option<Arc<ScorerModel>>,
    pub library: Option<Arc<SkillLibrary>>,
}

impl Models {
    pub fn check(&self, g: &GeneratorConfig) -> Result<()> {
        if g.needs_scorer() && self.scorer.is_none() {
            return Err(Error::Config("this generator needs a trained scorer model".into()));
        }
        if g.needs_library() && self.library.is_none() {
            return Err(Error::Config("this generator needs a skill library".into()));
        }
        Ok(())
    }
}

/// Parameters of a single perturbation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PerturbParams {
    pub b: f64,
    pub offset: usize,
    pub seed: u64,
}

/// Selected adversary behavior and what led to it.
#[derive(Debug, Clone)]
pub struct Perturbation {
    pub policy: AgentPolicy,
    pub candidate_index: Option<usize>,
    pub switch_step: Option<usize>,
}

/// Assigns the adversary's behavior for the next roll-out.
pub fn perturb_scenario(
    s: &Scenario,
    history: &EgoHistory,
    g: &GeneratorConfig,
    models: &Models,
    p: &PerturbParams,
) -> Result<Perturbation> {
    if !g.perturb {
        return Ok(Perturbation {
            policy: AgentPolicy::Replay(s.adversary().clone()),
            candidate_index: None,
            switch_step: None,
        });
    }
    models.check(g)?;
    if history.is_empty() {
        return Err(Error::InvalidInput(
            "perturbation needs at least one previous ego roll-out".into(),
        ));
    }
    let set = sample_candidates(s, p.seed)?;
    let best = match g.objective {
        Objective::Learned => rank_learned(models.scorer.as_ref().unwrap(), &set, history)?.0,
        Objective::Heuristic => rank_heuristic_cat(&set, history, s.footprint(s.ego_id), s.footprint(s.adv_id))?,
        Objective::Oracle => {
            let sums = set
                .candidates
                .iter()
                .map(|c| {
                    // Oracle sums averaged over history entries, like the learned rule.
                    let mut total = 0.0;
                    for h in history.iter() {
                        let mut single = EgoHistory::new(1);
                        single.push(h.clone());
                        total += oracle_score(s, c, &single, p.b)?.sum();
                    }
                    Ok(total / history.len() as f64)
                })
                .collect::<Result<Vec<f64>>>()?;
            argmax_first(&sums)
        }
    };
    let candidate = set.get(best);
    let reference = adversary_with(s, candidate)?;
    let (policy, switch_step) = match g.adversary {
        AdversaryKind::Replay => (AgentPolicy::Replay(reference), None),
        AdversaryKind::AdvSkills | AdversaryKind::BenignSkills => {
            let switch = match g.switch {
                SwitchRule::Offset => compute_switch_step(candidate, history, p.offset)?,
                SwitchRule::Zero => 0,
                SwitchRule::Never => NEVER,
            };
            let prior = if g.adversary == AdversaryKind::AdvSkills {
                PriorMode::Adversarial
            } else {
                PriorMode::Benign
            };
            let spec = AdversarySpec::new(
                reference,
                Some(candidate),
                models.library.clone().unwrap(),
                switch,
                prior,
            );
            (AgentPolicy::SkillAdversary(Arc::new(spec)), Some(switch))
        }
    };
    Ok(Perturbation {
        policy,
        candidate_index: Some(best),
        switch_step,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::criticality::ego_trajectory;
    use crate::scenario::{generate_synthetic, Template};
    use crate::sim::episode::replay_record;

    fn setup() -> (Scenario, EgoHistory) {
        let s = generate_synthetic(4, Template::TJunction, 1);
        let mut h = EgoHistory::new(5);
        h.push(ego_trajectory(&s, &replay_record(&s)).unwrap());
        (s, h)
    }

    #[test]
    fn preset_names_round_trip() {
        for p in GeneratorPreset::ALL {
            assert_eq!(p.name().parse::<GeneratorPreset>().unwrap(), p);
            assert_eq!(serde_json::to_string(&p).unwrap(), format!("\"{p}\""));
        }
        assert!("seal2".parse::<GeneratorPreset>().is_err());
    }

    #[test]
    fn model_requirements() {
        let none = Models::default();
        assert!(none.check(&GeneratorPreset::NoAdv.config()).is_ok());
        assert!(none.check(&GeneratorPreset::CatHeuristic.config()).is_ok());
        for p in [GeneratorPreset::Seal, GeneratorPreset::LearnedObj, GeneratorPreset::HeuristicObj] {
            assert!(matches!(none.check(&p.config()), Err(Error::Config(_))), "{p}");
        }
    }

    #[test]
    fn no_adv_keeps_the_recording() {
        let (s, h) = setup();
        let p = PerturbParams { b: 8.0, offset: 10, seed: 1 };
        let out = perturb_scenario(&s, &h, &GeneratorPreset::NoAdv.config(), &Models::default(), &p).unwrap();
        assert!(matches!(out.policy, AgentPolicy::Replay(ref t) if t == s.adversary()));
        assert_eq!(out.candidate_index, None);
        assert_eq!(out.switch_step, None);
    }

    #[test]
    fn heuristic_pick_is_seeded() {
        let (s, h) = setup();
        let g = GeneratorPreset::CatHeuristic.config();
        let p = PerturbParams { b: 8.0, offset: 10, seed: 9 };
        let a = perturb_scenario(&s, &h, &g, &Models::default(), &p).unwrap();
        let b = perturb_scenario(&s, &h, &g, &Models::default(), &p).unwrap();
        assert!(a.candidate_index.is_some());
        assert_eq!(a.candidate_index, b.candidate_index);
        match (a.policy, b.policy) {
            (AgentPolicy::Replay(x), AgentPolicy::Replay(y)) => {
                assert_eq!(x, y);
                // History up to the candidate start is kept.
                assert_eq!(x.at(0), s.adversary().at(0));
            }
            _ => panic!("trajectory-following adversary expected"),
        }
        let empty = EgoHistory::new(5);
        assert!(perturb_scenario(&s, &empty, &g, &Models::default(), &p).is_err());
    }
}
