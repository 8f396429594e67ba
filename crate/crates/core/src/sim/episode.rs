//! Fixed-step episode loop and the roll-out record it produces.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::collision::{detect_collision, detect_offroad};
use super::kinematics::{step_kinematics, AgentState};
use super::policy::{AgentPolicy, AgentView, Controller, PolicyBinding, WorldView};
use crate::error::{Error, Result};
use crate::geometry::{wrap_angle, Vec2};
use crate::rng::derive_seed;
use crate::scenario::{AgentId, Scenario, Trajectory, DT};

/// Ego counts as arrived when within this distance of its final recorded position.
pub const SUCCESS_RADIUS: f64 = 2.0;
/// Step budget as a multiple of the scenario horizon.
pub const TIMEOUT_FACTOR: f64 = 1.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Outcome {
    Success,
    Crash,
    OutOfRoad,
    Timeout,
}

impl Outcome {
    pub const ALL: [Outcome; 4] = [
        Outcome::Success,
        Outcome::Crash,
        Outcome::OutOfRoad,
        Outcome::Timeout,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Outcome::Success => "Success",
            Outcome::Crash => "Crash",
            Outcome::OutOfRoad => "OutOfRoad",
            Outcome::Timeout => "Timeout",
        }
    }
}

/// Realized states of one agent. Index `i` of every per-step vector is global step
/// `start_step + i`; `actions[i]` moved the agent from step `start_step + i` to the next.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentRollout {
    pub start_step: usize,
    pub xy: Vec<Vec2>,
    pub heading: Vec<f64>,
    pub speed: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub actions: Vec<[f64; 2]>,
    #[serde(default)]
    pub offroad: Vec<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub collision_step: Option<usize>,
}

impl AgentRollout {
    pub fn len(&self) -> usize {
        self.xy.len()
    }

    pub fn is_empty(&self) -> bool {
        self.xy.is_empty()
    }

    pub fn end_step(&self) -> usize {
        self.start_step + self.xy.len().saturating_sub(1)
    }

    pub fn state_at(&self, step: usize) -> Option<(Vec2, f64, f64)> {
        let i = step.checked_sub(self.start_step)?;
        Some((*self.xy.get(i)?, self.heading[i], self.speed[i]))
    }

    pub fn first_offroad_step(&self) -> Option<usize> {
        self.offroad.iter().position(|&o| o).map(|i| self.start_step + i)
    }

    /// Realized positions as a trajectory (requires ≥ 2 states).
    pub fn trajectory(&self) -> Result<Trajectory> {
        Trajectory::new(self.start_step, self.xy.clone())
    }
}

/// Ego contact at the terminating crash.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Contact {
    pub partner: AgentId,
    pub normal: Vec2,
    pub rel_speed: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RolloutRecord {
    pub scenario_id: String,
    pub seed: u64,
    pub ego_id: AgentId,
    pub adv_id: AgentId,
    pub outcome: Outcome,
    pub term_step: usize,
    pub agents: BTreeMap<AgentId, AgentRollout>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub contact: Option<Contact>,
}

impl RolloutRecord {
    pub fn agent(&self, id: AgentId) -> Option<&AgentRollout> {
        self.agents.get(&id)
    }

    /// Absolute heading difference between two agents at `step`, in [0, π].
    pub fn heading_difference(&self, a: AgentId, b: AgentId, step: usize) -> Option<f64> {
        let (_, ha, _) = self.agent(a)?.state_at(step)?;
        let (_, hb, _) = self.agent(b)?.state_at(step)?;
        Some(wrap_angle(ha - hb).abs())
    }

    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("roll-out record serializes")
    }
}

pub fn write_rollouts(path: &Path, records: &[RolloutRecord]) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut out = std::io::BufWriter::new(std::fs::File::create(path).map_err(|e| Error::io(path, e))?);
    for r in records {
        writeln!(out, "{}", r.to_json_line()).map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

pub fn read_rollouts(path: &Path) -> Result<Vec<RolloutRecord>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| Error::parse(format!("line {}", i + 1), e.to_string()))
        })
        .collect()
}

/// Number of transitions simulated before the episode times out.
pub fn step_budget(scenario: &Scenario) -> usize {
    (TIMEOUT_FACTOR * scenario.horizon() as f64).floor() as usize
}

struct Runtime {
    id: AgentId,
    state: AgentState,
    active: bool,
    spawned: bool,
    replay: Option<ReplayTrack>,
    controller: Option<Box<dyn Controller>>,
    record: AgentRollout,
}

struct ReplayTrack {
    traj: Trajectory,
    headings: Vec<f64>,
    speeds: Vec<f64>,
}

impl ReplayTrack {
    fn state(&self, step: usize, template: &AgentState) -> Option<AgentState> {
        let i = step.checked_sub(self.traj.start_index())?;
        Some(AgentState {
            position: *self.traj.points().get(i)?,
            heading: self.headings[i],
            speed: self.speeds[i],
            footprint: template.footprint,
        })
    }
}

fn initial_state(scenario: &Scenario, id: AgentId) -> AgentState {
    let traj = scenario.trajectory(id);
    AgentState {
        position: traj.first(),
        heading: traj.headings()[0],
        speed: traj.speeds()[0],
        footprint: scenario.footprint(id),
    }
}

/// Runs one closed-loop episode. Panics if `bindings` is incomplete; call
/// [`PolicyBinding::validate`] first for untrusted configurations.
pub fn run_episode(scenario: &Scenario, bindings: &PolicyBinding, seed: u64) -> RolloutRecord {
    bindings
        .validate(scenario)
        .expect("policy bindings must cover every scenario agent");
    let ego_id = scenario.ego_id;
    let goal = scenario.ego().last();
    let budget = step_budget(scenario);

    let mut agents: Vec<Runtime> = scenario
        .agent_ids()
        .map(|id| {
            let policy = bindings.get(id).unwrap();
            let state = initial_state(scenario, id);
            let replay = match policy {
                AgentPolicy::Replay(t) => Some(ReplayTrack {
                    headings: t.headings(),
                    speeds: t.speeds(),
                    traj: t.clone(),
                }),
                _ => None,
            };
            let start = match &replay {
                Some(r) => r.traj.start_index(),
                None => scenario.trajectory(id).start_index(),
            };
            let state = match &replay {
                Some(r) => r.state(start, &state).unwrap(),
                None => state,
            };
            Runtime {
                id,
                state,
                active: false,
                spawned: false,
                controller: policy.controller(scenario, id, derive_seed(seed, &[id as u64])),
                replay,
                record: AgentRollout {
                    start_step: start,
                    xy: Vec::new(),
                    heading: Vec::new(),
                    speed: Vec::new(),
                    actions: Vec::new(),
                    offroad: Vec::new(),
                    collision_step: None,
                },
            }
        })
        .collect();

    let mut outcome = Outcome::Timeout;
    let mut term_step = budget;
    let mut contact = None;

    for step in 0..=budget {
        if step > 0 {
            // Every controller observes the same snapshot of step - 1.
            let views: Vec<AgentView> = agents
                .iter()
                .map(|a| AgentView {
                    id: a.id,
                    state: a.state,
                    active: a.active,
                })
                .collect();
            for a in agents.iter_mut().filter(|a| a.active) {
                if let Some(ctrl) = a.controller.as_mut() {
                    let view = WorldView {
                        step: step - 1,
                        me: a.id,
                        scenario,
                        agents: &views,
                    };
                    let action = ctrl.act(&view);
                    a.record.actions.push([action.steer, action.accel]);
                    a.state = step_kinematics(&a.state, &action, DT);
                } else if let Some(r) = &a.replay {
                    match r.state(step, &a.state) {
                        Some(s) => a.state = s,
                        None => a.active = false,
                    }
                }
            }
        }

        for a in agents.iter_mut().filter(|a| !a.spawned && a.record.start_step == step) {
            a.spawned = true;
            a.active = true;
        }

        for a in agents.iter_mut().filter(|a| a.active) {
            let off = detect_offroad(&a.state, &scenario.map);
            a.record.xy.push(a.state.position);
            a.record.heading.push(a.state.heading);
            a.record.speed.push(a.state.speed);
            a.record.offroad.push(off);
        }

        // Pairwise contacts among active agents, ascending id order.
        let mut ego_contact = None;
        let mut hit = vec![false; agents.len()];
        for i in 0..agents.len() {
            if !agents[i].active {
                continue;
            }
            for j in i + 1..agents.len() {
                if !agents[j].active {
                    continue;
                }
                let (a, b) = (&agents[i], &agents[j]);
                let Some(c) = detect_collision(&a.state, &b.state) else {
                    continue;
                };
                hit[i] = true;
                hit[j] = true;
                if ego_contact.is_none() && (a.id == ego_id || b.id == ego_id) {
                    let (partner, normal) = if a.id == ego_id {
                        (b.id, c.normal)
                    } else {
                        (a.id, -c.normal)
                    };
                    ego_contact = Some(Contact {
                        partner,
                        normal,
                        rel_speed: c.relative_speed,
                    });
                }
            }
        }
        for (a, &h) in agents.iter_mut().zip(&hit) {
            if h {
                a.record.collision_step.get_or_insert(step);
                if a.id != ego_id {
                    a.active = false;
                }
            }
        }

        let ego = agents.iter().find(|a| a.id == ego_id).unwrap();
        if ego_contact.is_some() {
            outcome = Outcome::Crash;
            contact = ego_contact;
        } else if ego.active && ego.record.offroad.last() == Some(&true) {
            outcome = Outcome::OutOfRoad;
        } else if step > 0 && ego.active && ego.state.position.dist(goal) <= SUCCESS_RADIUS {
            outcome = Outcome::Success;
        } else {
            continue;
        }
        term_step = step;
        break;
    }

    RolloutRecord {
        scenario_id: scenario.id.clone(),
        seed,
        ego_id,
        adv_id: scenario.adv_id,
        outcome,
        term_step,
        agents: agents.into_iter().map(|a| (a.id, a.record)).collect(),
        contact,
    }
}

/// Replays every agent's recorded trajectory.
pub fn replay_record(scenario: &Scenario) -> RolloutRecord {
    run_episode(scenario, &PolicyBinding::replay_all(scenario), 0)
}
