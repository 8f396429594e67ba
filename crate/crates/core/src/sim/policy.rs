//! Per-agent behavior bindings and the controller interface used by the episode loop.

use std::collections::BTreeMap;
use std::sync::Arc;

use super::control::{extended_path, follow_path};
use super::idm::{find_leader, idm_accel, IdmParams};
use super::kinematics::{Action, AgentState};
use crate::error::{Error, Result};
use crate::geometry::Polyline;
use crate::harness::ego::{EgoController, EgoParams};
use crate::scenario::{AgentId, Scenario, Trajectory};
use crate::skills::adversary::{AdversarySpec, SkillAdversary};

/// Snapshot of one agent as seen by every controller during a step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AgentView {
    pub id: AgentId,
    pub state: AgentState,
    pub active: bool,
}

/// Read-only world state at the start of a step. All agents observe the same snapshot.
pub struct WorldView<'a> {
    pub step: usize,
    pub me: AgentId,
    pub scenario: &'a Scenario,
    pub agents: &'a [AgentView],
}

impl<'a> WorldView<'a> {
    pub fn own(&self) -> &AgentState {
        &self
            .agents
            .iter()
            .find(|a| a.id == self.me)
            .expect("controller agent is part of the world")
            .state
    }

    /// Active agents other than the observer.
    pub fn others(&self) -> impl Iterator<Item = &'a AgentView> + '_ {
        let me = self.me;
        self.agents.iter().filter(move |a| a.active && a.id != me)
    }
}

pub trait Controller: Send {
    fn act(&mut self, view: &WorldView<'_>) -> Action;
}

/// IDM longitudinal control plus pure-pursuit tracking of the agent's recorded path.
pub struct IdmController {
    params: IdmParams,
    path: Polyline,
}

impl IdmController {
    pub fn new(params: IdmParams, reference: &Trajectory) -> Self {
        Self {
            params,
            path: reference_path(reference),
        }
    }
}

/// Recorded path extended 200 m past its end; stationary records extend along +x from
/// the recorded position.
pub fn reference_path(reference: &Trajectory) -> Polyline {
    extended_path(reference.points(), 200.0).unwrap_or_else(|| {
        let p = reference.first();
        Polyline::new(&[p, p + crate::geometry::Vec2::new(200.0, 0.0)]).unwrap()
    })
}

impl Controller for IdmController {
    fn act(&mut self, view: &WorldView<'_>) -> Action {
        let me = view.own();
        let (_, lane_width) = view.scenario.map.lateral_offset(me.position);
        let leader = find_leader(me, &self.path, lane_width, view.others().map(|a| &a.state));
        let accel = idm_accel(me.speed, leader, &self.params);
        Action::new(follow_path(me, &self.path), Action::accel_command(accel))
    }
}

#[derive(Debug, Clone)]
pub enum AgentPolicy {
    /// Follow a fixed trajectory exactly (non-reactive).
    Replay(Trajectory),
    Idm(IdmParams),
    SkillAdversary(Arc<AdversarySpec>),
    TrainableEgo(EgoParams),
}

impl AgentPolicy {
    pub fn kind(&self) -> &'static str {
        match self {
            AgentPolicy::Replay(_) => "replay",
            AgentPolicy::Idm(_) => "idm",
            AgentPolicy::SkillAdversary(_) => "skill-adversary",
            AgentPolicy::TrainableEgo(_) => "trainable-ego",
        }
    }

    /// Instantiates per-episode controller state; `None` for replayed agents.
    pub(crate) fn controller(
        &self,
        scenario: &Scenario,
        id: AgentId,
        seed: u64,
    ) -> Option<Box<dyn Controller>> {
        let gt = scenario.trajectory(id);
        match self {
            AgentPolicy::Replay(_) => None,
            AgentPolicy::Idm(p) => Some(Box::new(IdmController::new(*p, gt))),
            AgentPolicy::SkillAdversary(spec) => {
                Some(Box::new(SkillAdversary::new(spec.clone(), seed)))
            }
            AgentPolicy::TrainableEgo(p) => Some(Box::new(EgoController::new(*p, gt))),
        }
    }
}

/// Exactly one policy per scenario agent.
#[derive(Debug, Clone)]
pub struct PolicyBinding {
    policies: BTreeMap<AgentId, AgentPolicy>,
}

impl PolicyBinding {
    /// Every agent replays its recorded trajectory.
    pub fn replay_all(scenario: &Scenario) -> Self {
        Self {
            policies: scenario
                .agents
                .iter()
                .map(|(id, a)| (*id, AgentPolicy::Replay(a.trajectory.clone())))
                .collect(),
        }
    }

    /// Every agent follows IDM with defaults derived from its recorded trajectory.
    pub fn idm_all(scenario: &Scenario) -> Self {
        Self {
            policies: scenario
                .agents
                .iter()
                .map(|(id, a)| (*id, AgentPolicy::Idm(IdmParams::for_trajectory(&a.trajectory))))
                .collect(),
        }
    }

    pub fn from_map(policies: BTreeMap<AgentId, AgentPolicy>) -> Self {
        Self { policies }
    }

    pub fn with(mut self, id: AgentId, policy: AgentPolicy) -> Self {
        self.policies.insert(id, policy);
        self
    }

    pub fn set(&mut self, id: AgentId, policy: AgentPolicy) {
        self.policies.insert(id, policy);
    }

    pub fn get(&self, id: AgentId) -> Option<&AgentPolicy> {
        self.policies.get(&id)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&AgentId, &AgentPolicy)> {
        self.policies.iter()
    }

    pub fn validate(&self, scenario: &Scenario) -> Result<()> {
        for id in scenario.agent_ids() {
            if !self.policies.contains_key(&id) {
                return Err(Error::Config(format!("agent {id} has no policy binding")));
            }
        }
        for id in self.policies.keys() {
            if !scenario.agents.contains_key(id) {
                return Err(Error::Config(format!(
                    "binding for agent {id} which is not in the scenario"
                )));
            }
        }
        for (id, p) in &self.policies {
            if let AgentPolicy::Idm(params) = p {
                if !params.is_valid() {
                    return Err(Error::Config(format!("agent {id}: invalid IDM parameters")));
                }
            }
        }
        Ok(())
    }
}
