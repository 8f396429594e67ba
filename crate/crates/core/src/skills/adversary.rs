//! Reactive adversary: replays its selected future until the switch step, then runs
//! prior-driven skills in closed loop.

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{execute_skill, observe, sample_skill, PriorMode, Route, SkillLibrary};
use crate::scenario::Trajectory;
use crate::sim::control::track_reference;
use crate::sim::kinematics::Action;
use crate::sim::policy::{Controller, WorldView};

/// Switch step meaning "never switch".
pub const NEVER: usize = usize::MAX;

#[derive(Debug, Clone)]
pub struct AdversarySpec {
    /// Full adversary reference (recorded history followed by the selected future).
    pub reference: Trajectory,
    pub route: Route,
    pub library: Arc<SkillLibrary>,
    pub switch_step: usize,
    pub prior: PriorMode,
    pub greedy: bool,
}

impl AdversarySpec {
    /// Subgoals come from the selected future (or the whole reference if `future` is
    /// `None`).
    pub fn new(
        reference: Trajectory,
        future: Option<&Trajectory>,
        library: Arc<SkillLibrary>,
        switch_step: usize,
        prior: PriorMode,
    ) -> Self {
        let route = Route::from_trajectory(future.unwrap_or(&reference));
        Self {
            reference,
            route,
            library,
            switch_step,
            prior,
            greedy: false,
        }
    }
}

pub struct SkillAdversary {
    spec: Arc<AdversarySpec>,
    rng: ChaCha8Rng,
    skill: Option<usize>,
    skill_step: usize,
}

impl SkillAdversary {
    pub fn new(spec: Arc<AdversarySpec>, seed: u64) -> Self {
        Self {
            spec,
            rng: ChaCha8Rng::seed_from_u64(seed),
            skill: None,
            skill_step: 0,
        }
    }

    /// Skill currently being executed, if the adversary has switched.
    pub fn active_skill(&self) -> Option<usize> {
        self.skill
    }
}

impl Controller for SkillAdversary {
    fn act(&mut self, view: &WorldView<'_>) -> Action {
        let me = *view.own();
        if view.step < self.spec.switch_step {
            return track_reference(&me, &self.spec.reference, view.step);
        }
        let lib = &self.spec.library;
        let obs = observe(
            &me,
            view.others().map(|a| &a.state),
            &view.scenario.map,
            &self.spec.route,
        );
        if self.skill.is_none() || self.skill_step >= lib.horizon {
            self.skill = Some(sample_skill(lib, &obs, self.spec.prior, &mut self.rng, self.spec.greedy));
            self.skill_step = 0;
        }
        let actions = execute_skill(lib, self.skill.unwrap(), &obs);
        let a = actions[self.skill_step.min(actions.len() - 1)];
        self.skill_step += 1;
        a
    }
}
