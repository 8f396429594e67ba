//! Deterministic fixed-step simulator.

pub mod collision;
pub mod control;
pub mod episode;
pub mod idm;
pub mod kinematics;
pub mod policy;

pub use collision::{detect_collision, detect_offroad, ContactInfo};
pub use episode::{run_episode, AgentRollout, Contact, Outcome, RolloutRecord};
pub use idm::{idm_accel, IdmParams};
pub use kinematics::{step_kinematics, Action, AgentState};
pub use policy::{AgentPolicy, Controller, PolicyBinding, WorldView};
