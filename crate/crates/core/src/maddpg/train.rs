use log::info;

use super::agents::{act, assign_slots, episode_members, TrainedAgents};
use super::config::TrainConfig;
use super::replay::Transition;
use super::update::{update_step, Replay};
use crate::env::{observe_all, ActionVector, World, N_AGENTS};
use crate::error::Result;
use crate::rng::{stream, Stream};

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub agents: TrainedAgents,
    /// Total shared reward of every training episode.
    pub episode_rewards: Vec<f64>,
    pub updates: usize,
}

pub fn train(config: &TrainConfig) -> Result<TrainOutcome> {
    train_with(config, |_, _| {})
}

/// Runs the full training loop, calling `on_episode(index, reward)` after
/// every episode.
pub fn train_with(config: &TrainConfig, mut on_episode: impl FnMut(usize, f64)) -> Result<TrainOutcome> {
    config.validate()?;
    let scheme = config.scheme;
    let world = World::new(config.physics);
    let mut init_rng = stream(config.seed, Stream::Init);
    let mut env_rng = stream(config.seed, Stream::Environment);
    let mut noise_rng = stream(config.seed, Stream::Exploration);
    let mut scheme_rng = stream(config.seed, Stream::Scheme);
    let mut replay_rng = stream(config.seed, Stream::Replay);

    let mut agents = TrainedAgents::init(config.clone(), &mut init_rng);
    let mut replay = Replay::new(scheme, config.buffer_capacity);
    let mut episode_rewards = Vec::with_capacity(config.episodes);
    let mut total_steps = 0usize;
    let mut updates = 0usize;

    for episode in 0..config.episodes {
        let slots = assign_slots(scheme, episode, &mut scheme_rng);
        let members = episode_members(scheme, episode, &mut scheme_rng);
        let mut state = world.reset(&mut env_rng);
        let mut obs = observe_all(&state);
        let mut episode_reward = 0.0;

        for t in 0..config.horizon {
            let mut actions = [ActionVector::IDLE; N_AGENTS];
            let mut slot_actions = [[0.0; crate::env::ACT_DIM]; N_AGENTS];
            for s in 0..N_AGENTS {
                let a = act(
                    agents.actor(s, members[s]),
                    &obs[slots[s]],
                    config.exploration_noise_std,
                    &mut noise_rng,
                );
                actions[slots[s]] = a;
                slot_actions[s] = a.0;
            }
            let (next, outcome) = world.step(&state, &actions)?;
            let next_obs = observe_all(&next);
            replay.push(Transition {
                observations: std::array::from_fn(|s| obs[slots[s]].0),
                actions: slot_actions,
                rewards: [outcome.reward; N_AGENTS],
                next_observations: std::array::from_fn(|s| next_obs[slots[s]].0),
                terminal: config.terminal_at_horizon && t + 1 == config.horizon,
                members: members.map(|m| m as u8),
            });
            episode_reward += outcome.reward;
            state = next;
            obs = next_obs;
            total_steps += 1;

            if total_steps % config.update_interval_steps == 0 && replay.min_len() >= config.warmup() {
                let diag = update_step(&mut agents, &replay, config, &mut replay_rng)?;
                updates += 1;
                if updates % 1000 == 0 {
                    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len().max(1) as f64;
                    info!(
                        "update {updates}: critic loss {:.4}, actor loss {:.4}",
                        mean(&diag.critic_loss),
                        mean(&diag.actor_loss)
                    );
                }
            }
        }
        episode_rewards.push(episode_reward);
        on_episode(episode, episode_reward);
    }

    Ok(TrainOutcome {
        agents,
        episode_rewards,
        updates,
    })
}
