use rand::Rng;

use super::agents::{critic_order, learner_count, Learner, TrainedAgents, CRITIC_DIM, CRITIC_OWN_ACTION};
use super::config::{Scheme, TrainConfig};
use super::replay::{Batch, ReplayBuffer, Transition};
use crate::env::{ACT_DIM, N_AGENTS, OBS_DIM};
use crate::error::{Error, Result};
use crate::nn::{clip_per_tensor, Matrix, Mlp, Want};

/// Replay storage of a run: a single buffer shared by all slots, or one
/// buffer per ensemble member (indexed like the learners).
#[derive(Clone, Debug)]
pub struct Replay {
    scheme: Scheme,
    pub buffers: Vec<ReplayBuffer>,
}

impl Replay {
    pub fn new(scheme: Scheme, capacity: usize) -> Self {
        let n = match scheme {
            Scheme::Ensemble { .. } => learner_count(scheme),
            _ => 1,
        };
        Replay {
            scheme,
            buffers: (0..n).map(|_| ReplayBuffer::new(capacity)).collect(),
        }
    }

    /// Stores a transition in the buffer of every member that acted in it.
    pub fn push(&mut self, t: Transition) {
        let t = std::sync::Arc::new(t);
        match self.scheme {
            Scheme::Ensemble { k } => {
                for s in 0..N_AGENTS {
                    self.buffers[s * k + t.members[s] as usize].push(t.clone());
                }
            }
            _ => self.buffers[0].push(t),
        }
    }

    pub fn min_len(&self) -> usize {
        self.buffers.iter().map(ReplayBuffer::len).min().unwrap_or(0)
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct UpdateDiagnostics {
    /// Mean squared TD error before each critic step, one per learner update.
    pub critic_loss: Vec<f64>,
    pub actor_loss: Vec<f64>,
}

/// Builds the centralized critic input of `slot` (self first).
pub fn critic_input(observations: &[Matrix; N_AGENTS], actions: &[Matrix; N_AGENTS], slot: usize) -> Matrix {
    let n = observations[0].rows();
    let order = critic_order(slot);
    let mut x = Matrix::zeros(n, CRITIC_DIM);
    for r in 0..n {
        let row = x.row_mut(r);
        for (k, &s) in order.iter().enumerate() {
            row[k * OBS_DIM..(k + 1) * OBS_DIM].copy_from_slice(observations[s].row(r));
            let a0 = CRITIC_OWN_ACTION + k * ACT_DIM;
            row[a0..a0 + ACT_DIM].copy_from_slice(actions[s].row(r));
        }
    }
    x
}

/// TD target `r + gamma * Q'(o', a')` for one transition from `slot`'s
/// perspective, where `a'` comes from the target actors.
pub fn critic_target(
    t: &Transition,
    slot: usize,
    target_actors: [&Mlp; N_AGENTS],
    target_critic: &Mlp,
    gamma: f64,
) -> Result<f64> {
    let r = t.rewards[slot];
    if t.terminal {
        return Ok(r);
    }
    let mut input = Vec::with_capacity(CRITIC_DIM);
    let order = critic_order(slot);
    for &s in &order {
        input.extend_from_slice(&t.next_observations[s]);
    }
    for &s in &order {
        input.extend_from_slice(&target_actors[s].forward(&t.next_observations[s])?.output);
    }
    Ok(r + gamma * target_critic.forward(&input)?.output[0])
}

/// Target-actor actions on the next observations; each row uses the
/// ensemble members recorded with it.
fn next_target_actions(agents: &TrainedAgents, batch: &Batch) -> Result<[Matrix; N_AGENTS]> {
    let n = batch.len();
    let scheme = agents.scheme();
    let mut out: [Matrix; N_AGENTS] = std::array::from_fn(|_| Matrix::zeros(n, ACT_DIM));
    for (s, slot_out) in out.iter_mut().enumerate() {
        let members = scheme.members();
        if members == 1 {
            let actor = &agents.learners[agents.learner_index(s, 0)].actor.target;
            *slot_out = actor.predict_batch(&batch.next_observations[s])?;
            continue;
        }
        for m in 0..members {
            let rows: Vec<usize> = (0..n).filter(|&r| batch.members[r][s] as usize == m).collect();
            if rows.is_empty() {
                continue;
            }
            let mut x = Matrix::zeros(rows.len(), OBS_DIM);
            for (i, &r) in rows.iter().enumerate() {
                x.row_mut(i).copy_from_slice(batch.next_observations[s].row(r));
            }
            let actor = &agents.learners[agents.learner_index(s, m)].actor.target;
            let a = actor.predict_batch(&x)?;
            for (i, &r) in rows.iter().enumerate() {
                slot_out.row_mut(r).copy_from_slice(a.row(i));
            }
        }
    }
    Ok(out)
}

fn td_targets(learner: &Learner, slot: usize, batch: &Batch, next_actions: &[Matrix; N_AGENTS], gamma: f64) -> Result<Vec<f64>> {
    let x = critic_input(&batch.next_observations, next_actions, slot);
    let q_next = learner.critic.target.predict_batch(&x)?;
    Ok((0..batch.len())
        .map(|r| {
            let bootstrap = if batch.terminal[r] { 0.0 } else { gamma * q_next.get(r, 0) };
            batch.rewards[slot][r] + bootstrap
        })
        .collect())
}

/// Mean squared TD error of a learner's live critic on a batch.
pub fn critic_loss(learner: &Learner, slot: usize, batch: &Batch, targets: &[f64]) -> Result<f64> {
    let x = critic_input(&batch.observations, &batch.actions, slot);
    let q = learner.critic.online.predict_batch(&x)?;
    Ok(targets
        .iter()
        .enumerate()
        .map(|(r, y)| (q.get(r, 0) - y).powi(2))
        .sum::<f64>()
        / targets.len() as f64)
}

/// Critic regression then actor ascent for one learner seen from `slot`.
/// Returns `(critic_loss, actor_loss)`.
fn update_learner(
    learner: &mut Learner,
    slot: usize,
    batch: &Batch,
    targets: &[f64],
    cfg: &TrainConfig,
) -> Result<(f64, f64)> {
    let n = batch.len();
    let inv_n = 1.0 / n as f64;
    let mut x = critic_input(&batch.observations, &batch.actions, slot);

    // critic: minimise mean (Q - y)^2
    let trace = learner.critic.online.forward_batch(&x)?;
    let mut dq = Matrix::zeros(n, 1);
    let mut critic_loss = 0.0;
    for (r, y) in targets.iter().enumerate() {
        let err = trace.output.get(r, 0) - y;
        critic_loss += err * err;
        dq.set(r, 0, 2.0 * err * inv_n);
    }
    critic_loss *= inv_n;
    let mut g = learner
        .critic
        .online
        .backward_batch(&trace, &dq, Want::PARAMS)?
        .params
        .expect("requested");
    clip_per_tensor(learner.critic.spec(), &mut g, cfg.grad_clip);
    learner.critic.adam_step(&g, cfg.critic_lr)?;

    // actor: maximise Q(o, mu(o_self), a_others) with a small penalty on
    // the squared pre-activations
    let a_trace = learner.actor.online.forward_batch(&batch.observations[slot])?;
    for r in 0..n {
        x.row_mut(r)[CRITIC_OWN_ACTION..CRITIC_OWN_ACTION + ACT_DIM].copy_from_slice(a_trace.output.row(r));
    }
    let q_trace = learner.critic.online.forward_batch(&x)?;
    let up = Matrix::from_vec(n, 1, vec![-inv_n; n])?;
    let dx = learner
        .critic
        .online
        .backward_batch(&q_trace, &up, Want::INPUT)?
        .input
        .expect("requested");
    let reg_scale = 2.0 * cfg.actor_reg / (n * ACT_DIM) as f64;
    let mut d_pre = Matrix::zeros(n, ACT_DIM);
    let mut reg = 0.0;
    for r in 0..n {
        let da = &dx.row(r)[CRITIC_OWN_ACTION..CRITIC_OWN_ACTION + ACT_DIM];
        let y = a_trace.output.row(r);
        let z = a_trace.pre_output.row(r);
        let out = d_pre.row_mut(r);
        for k in 0..ACT_DIM {
            out[k] = da[k] * y[k] * (1.0 - y[k]) + reg_scale * z[k];
            reg += z[k] * z[k];
        }
    }
    let mean_q = q_trace.output.as_slice().iter().sum::<f64>() * inv_n;
    let actor_loss = -mean_q + cfg.actor_reg * reg / (n * ACT_DIM) as f64;
    let mut g = learner
        .actor
        .online
        .backward_preactivation(&a_trace, d_pre, Want::PARAMS)?
        .params
        .expect("requested");
    clip_per_tensor(learner.actor.spec(), &mut g, cfg.grad_clip);
    learner.actor.adam_step(&g, cfg.actor_lr)?;

    Ok((critic_loss, actor_loss))
}

/// One MADDPG update of every learner, followed by soft target updates.
pub fn update_step<R: Rng + ?Sized>(
    agents: &mut TrainedAgents,
    replay: &Replay,
    cfg: &TrainConfig,
    rng: &mut R,
) -> Result<UpdateDiagnostics> {
    if replay.min_len() < cfg.batch_size {
        return Err(Error::InsufficientBuffer {
            size: replay.min_len(),
            needed: cfg.batch_size,
        });
    }
    let mut diag = UpdateDiagnostics::default();
    match agents.scheme() {
        Scheme::Ensemble { k } => {
            for slot in 0..N_AGENTS {
                for member in 0..k {
                    let li = agents.learner_index(slot, member);
                    let batch = replay.buffers[li].sample(cfg.batch_size, rng)?;
                    let next = next_target_actions(agents, &batch)?;
                    let y = td_targets(&agents.learners[li], slot, &batch, &next, cfg.gamma)?;
                    let (c, a) = update_learner(&mut agents.learners[li], slot, &batch, &y, cfg)?;
                    diag.critic_loss.push(c);
                    diag.actor_loss.push(a);
                }
            }
        }
        _ => {
            let batch = replay.buffers[0].sample(cfg.batch_size, rng)?;
            let next = next_target_actions(agents, &batch)?;
            for slot in 0..N_AGENTS {
                let li = agents.learner_index(slot, 0);
                let y = td_targets(&agents.learners[li], slot, &batch, &next, cfg.gamma)?;
                let (c, a) = update_learner(&mut agents.learners[li], slot, &batch, &y, cfg)?;
                diag.critic_loss.push(c);
                diag.actor_loss.push(a);
            }
        }
    }
    for l in &mut agents.learners {
        l.actor.soft_update(cfg.tau)?;
        l.critic.soft_update(cfg.tau)?;
    }
    Ok(diag)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::maddpg::agents::{actor_spec, critic_spec};
    use crate::nn::{MlpSpec, OutputActivation};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_transition<R: Rng>(rng: &mut R, members: [u8; 3]) -> Transition {
        let mut obs = || std::array::from_fn(|_| std::array::from_fn(|_| rng.gen_range(-1.0..1.0)));
        let observations = obs();
        let next_observations = obs();
        let r = rng.gen_range(-3.0..0.0);
        Transition {
            observations,
            actions: std::array::from_fn(|_| std::array::from_fn(|_| rng.gen_range(0.0..1.0))),
            rewards: [r; 3],
            next_observations,
            terminal: false,
            members,
        }
    }

    fn filled(scheme: Scheme, n: usize, seed: u64) -> (TrainedAgents, Replay, TrainConfig) {
        let cfg = TrainConfig {
            scheme,
            batch_size: 32,
            ..TrainConfig::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let agents = TrainedAgents::init(cfg.clone(), &mut rng);
        let mut replay = Replay::new(scheme, 10_000);
        for _ in 0..n {
            let members = std::array::from_fn(|_| rng.gen_range(0..scheme.members()) as u8);
            replay.push(random_transition(&mut rng, members));
        }
        (agents, replay, cfg)
    }

    #[test]
    fn terminal_and_myopic_targets() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let actor = Mlp::init(actor_spec(), &mut rng);
        let critic = Mlp::init(critic_spec(), &mut rng);
        let mut t = random_transition(&mut rng, [0; 3]);
        t.rewards = [-2.0; 3];
        t.terminal = true;
        assert_eq!(critic_target(&t, 0, [&actor; 3], &critic, 0.95).unwrap(), -2.0);
        t.terminal = false;
        t.rewards = [-1.5; 3];
        assert_eq!(critic_target(&t, 1, [&actor; 3], &critic, 0.0).unwrap(), -1.5);
    }

    #[test]
    fn batch_targets_match_single_transition_targets() {
        let (agents, replay, cfg) = filled(Scheme::Ensemble { k: 2 }, 400, 3);
        let batch = replay.buffers[1].sample(16, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        let next = next_target_actions(&agents, &batch).unwrap();
        let slot = 0;
        let li = agents.learner_index(slot, 1);
        let y = td_targets(&agents.learners[li], slot, &batch, &next, cfg.gamma).unwrap();
        let idx = replay.buffers[1].sample_indices(16, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        for (r, &i) in idx.iter().enumerate() {
            let t = replay.buffers[1].get(i);
            let actors: [&Mlp; 3] =
                std::array::from_fn(|s| &agents.learners[agents.learner_index(s, t.members[s] as usize)].actor.target);
            let single = critic_target(t, slot, actors, &agents.learners[li].critic.target, cfg.gamma).unwrap();
            assert!((single - y[r]).abs() < 1e-10);
        }
    }

    /// Hand-set one-unit networks: Q'(x) = sum of inputs, actors output 0.5.
    #[test]
    fn critic_target_by_hand() {
        let ones = |spec: MlpSpec, w: f64, b3: f64| {
            let mut p = vec![0.0; spec.param_count()];
            let off = spec.layer_offsets();
            let (i0, _) = spec.layer_dims()[0];
            p[off[0]..off[0] + i0].fill(w);
            p[off[1]] = 1.0;
            p[off[2]] = 1.0;
            p[off[2] + 1] = b3;
            Mlp::from_params(spec, p).unwrap()
        };
        let critic = ones(MlpSpec::new(CRITIC_DIM, 1, OutputActivation::Identity).with_hidden(1, 1), 1.0, 0.0);
        let actor = Mlp::zeros(MlpSpec::new(OBS_DIM, ACT_DIM, OutputActivation::Logistic).with_hidden(1, 1));
        let mut t = random_transition(&mut ChaCha8Rng::seed_from_u64(0), [0; 3]);
        t.next_observations = [[0.1; OBS_DIM]; 3];
        t.rewards = [-1.0; 3];
        // inputs: 42 * 0.1 + 15 * 0.5 = 11.7, positive so the rectifiers pass it
        let y = critic_target(&t, 2, [&actor; 3], &critic, 0.5).unwrap();
        assert!((y - (-1.0 + 0.5 * 11.7)).abs() < 1e-9);
    }

    #[test]
    fn insufficient_buffer_is_an_error() {
        let (mut agents, replay, cfg) = filled(Scheme::Vanilla, 10, 0);
        let err = update_step(&mut agents, &replay, &cfg, &mut ChaCha8Rng::seed_from_u64(0)).unwrap_err();
        assert!(matches!(err, Error::InsufficientBuffer { .. }));
    }

    #[test]
    fn update_is_deterministic() {
        for scheme in Scheme::ALL {
            let run = || {
                let (mut agents, replay, cfg) = filled(scheme, 300, 7);
                update_step(&mut agents, &replay, &cfg, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
                agents
            };
            assert_eq!(run().learners, run().learners);
        }
    }

    #[test]
    fn zero_tau_freezes_targets() {
        let (mut agents, replay, mut cfg) = filled(Scheme::Vanilla, 200, 2);
        cfg.tau = 0.0;
        let before = agents.clone();
        update_step(&mut agents, &replay, &cfg, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        for (a, b) in agents.learners.iter().zip(&before.learners) {
            assert_eq!(a.actor.target, b.actor.target);
            assert_eq!(a.critic.target, b.critic.target);
            assert_ne!(a.critic.online, b.critic.online);
        }
    }

    #[test]
    fn critic_step_reduces_its_own_loss() {
        let trials = 40;
        let mut improved = 0;
        for seed in 0..trials {
            let (mut agents, replay, mut cfg) = filled(Scheme::Vanilla, 200, seed);
            cfg.critic_lr = 1e-3;
            cfg.actor_lr = 1e-3;
            let mut rng = ChaCha8Rng::seed_from_u64(seed + 100);
            let batch = replay.buffers[0].sample(64, &mut rng).unwrap();
            let next = next_target_actions(&agents, &batch).unwrap();
            let y = td_targets(&agents.learners[0], 0, &batch, &next, cfg.gamma).unwrap();
            let before = critic_loss(&agents.learners[0], 0, &batch, &y).unwrap();
            update_learner(&mut agents.learners[0], 0, &batch, &y, &cfg).unwrap();
            let after = critic_loss(&agents.learners[0], 0, &batch, &y).unwrap();
            if after < before {
                improved += 1;
            }
        }
        assert!(improved as f64 >= 0.9 * trials as f64, "{improved}/{trials}");
    }

    #[test]
    fn ensemble_replay_routes_by_member() {
        let mut replay = Replay::new(Scheme::Ensemble { k: 3 }, 100);
        let t = random_transition(&mut ChaCha8Rng::seed_from_u64(0), [2, 0, 1]);
        replay.push(t);
        let lens: Vec<usize> = replay.buffers.iter().map(ReplayBuffer::len).collect();
        assert_eq!(lens, vec![0, 0, 1, 1, 0, 0, 0, 1, 0]);
    }
}
