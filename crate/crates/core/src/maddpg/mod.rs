//! Centralized-critic, decentralized-actor training (MADDPG) and its
//! shuffle / shared / ensemble variants.

mod agents;
mod config;
mod replay;
mod train;
mod update;

pub use agents::{
    act, act_traced, actor_spec, assign_slots, critic_order, critic_spec, episode_members,
    learner_count, learner_index, select_ensemble_members, Assignment, Learner, TrainedAgents,
    CRITIC_DIM, CRITIC_OWN_ACTION,
};
pub use config::{Scheme, TrainConfig, DEFAULT_ENSEMBLE_SIZE};
pub use replay::{Batch, ReplayBuffer, Transition};
pub use train::{train, train_with, TrainOutcome};
pub use update::{critic_input, critic_loss, critic_target, update_step, Replay, UpdateDiagnostics};
