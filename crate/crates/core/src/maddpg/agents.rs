use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::config::{Scheme, TrainConfig};
use crate::env::{ActionVector, Observation, ACT_DIM, N_AGENTS, OBS_DIM};
use crate::error::{Error, Result};
use crate::nn::{checkpoint, ForwardTrace, Mlp, MlpSpec, OutputActivation, ParamSet};

/// Centralized critic input: every slot's observation then every slot's
/// action, the updated slot first and the others in ascending slot order.
pub const CRITIC_DIM: usize = N_AGENTS * (OBS_DIM + ACT_DIM);

/// Column where the critic's own action block starts.
pub const CRITIC_OWN_ACTION: usize = N_AGENTS * OBS_DIM;

pub fn actor_spec() -> MlpSpec {
    MlpSpec::new(OBS_DIM, ACT_DIM, OutputActivation::Logistic)
}

pub fn critic_spec() -> MlpSpec {
    MlpSpec::new(CRITIC_DIM, 1, OutputActivation::Identity)
}

/// Slot order used for the critic input of `slot`: itself, then the others.
pub fn critic_order(slot: usize) -> [usize; N_AGENTS] {
    let mut order = [slot; N_AGENTS];
    let mut k = 1;
    for s in 0..N_AGENTS {
        if s != slot {
            order[k] = s;
            k += 1;
        }
    }
    order
}

/// One actor with its centralized critic.
#[derive(Clone, Debug, PartialEq)]
pub struct Learner {
    pub actor: ParamSet,
    pub critic: ParamSet,
}

impl Learner {
    pub fn init<R: Rng + ?Sized>(rng: &mut R) -> Self {
        Learner {
            actor: ParamSet::init(actor_spec(), rng),
            critic: ParamSet::init(critic_spec(), rng),
        }
    }
}

/// The policies of a run. Learners are addressed by `(slot, member)`; under
/// the shared scheme every slot maps to learner 0.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainedAgents {
    pub config: TrainConfig,
    pub learners: Vec<Learner>,
}

impl TrainedAgents {
    pub fn init<R: Rng + ?Sized>(config: TrainConfig, rng: &mut R) -> Self {
        let n = learner_count(config.scheme);
        TrainedAgents {
            learners: (0..n).map(|_| Learner::init(rng)).collect(),
            config,
        }
    }

    pub fn scheme(&self) -> Scheme {
        self.config.scheme
    }

    pub fn learner_index(&self, slot: usize, member: usize) -> usize {
        learner_index(self.config.scheme, slot, member)
    }

    pub fn actor(&self, slot: usize, member: usize) -> &Mlp {
        &self.learners[self.learner_index(slot, member)].actor.online
    }

    pub fn learner_mut(&mut self, slot: usize, member: usize) -> &mut Learner {
        let i = self.learner_index(slot, member);
        &mut self.learners[i]
    }

    /// Writes `learner{i}_actor.bin` / `learner{i}_critic.bin` per learner.
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for (i, l) in self.learners.iter().enumerate() {
            checkpoint::save(&l.actor.online, &dir.join(format!("learner{i}_actor.bin")))?;
            checkpoint::save(&l.critic.online, &dir.join(format!("learner{i}_critic.bin")))?;
        }
        Ok(())
    }

    /// Loads live parameters; target copies start equal to them and the
    /// optimizer state is fresh.
    pub fn load(dir: &Path, config: TrainConfig) -> Result<Self> {
        let n = learner_count(config.scheme);
        let mut learners = Vec::with_capacity(n);
        for i in 0..n {
            let actor = checkpoint::load(&dir.join(format!("learner{i}_actor.bin")))?;
            let critic = checkpoint::load(&dir.join(format!("learner{i}_critic.bin")))?;
            if *actor.spec() != actor_spec() || *critic.spec() != critic_spec() {
                return Err(Error::Corrupt {
                    path: dir.to_path_buf(),
                    reason: format!("learner {i} has unexpected network dimensions"),
                });
            }
            learners.push(Learner {
                actor: ParamSet::from_online(actor),
                critic: ParamSet::from_online(critic),
            });
        }
        Ok(TrainedAgents { config, learners })
    }
}

pub fn learner_count(scheme: Scheme) -> usize {
    match scheme {
        Scheme::Shared => 1,
        s => N_AGENTS * s.members(),
    }
}

pub fn learner_index(scheme: Scheme, slot: usize, member: usize) -> usize {
    match scheme {
        Scheme::Shared => 0,
        s => slot * s.members() + member,
    }
}

/// Deterministic actor output plus clamped Gaussian exploration noise. With
/// `noise_std == 0` the rng is not touched.
pub fn act<R: Rng + ?Sized>(actor: &Mlp, obs: &Observation, noise_std: f64, rng: &mut R) -> ActionVector {
    let trace = actor.forward(obs.as_slice()).expect("actor input is an observation");
    let mut a = [0.0; ACT_DIM];
    a.copy_from_slice(&trace.output);
    if noise_std > 0.0 {
        let normal = Normal::new(0.0, noise_std).expect("finite noise std");
        for v in &mut a {
            *v += normal.sample(rng);
        }
    }
    ActionVector::clamped(a)
}

/// Noise-free action together with the activations that produced it.
pub fn act_traced(actor: &Mlp, obs: &Observation) -> (ActionVector, ForwardTrace) {
    let trace = actor.forward(obs.as_slice()).expect("actor input is an observation");
    let mut a = [0.0; ACT_DIM];
    a.copy_from_slice(&trace.output);
    (ActionVector::clamped(a), trace)
}

/// Policy slot to body permutation for one episode: `perm[slot] = body`.
pub fn assign_slots<R: Rng + ?Sized>(scheme: Scheme, _episode: usize, rng: &mut R) -> [usize; N_AGENTS] {
    let mut perm = [0, 1, 2];
    if scheme == Scheme::Shuffle {
        perm.shuffle(rng);
    }
    perm
}

/// Ensemble member acting in each slot for one episode, i.i.d. uniform.
pub fn select_ensemble_members<R: Rng + ?Sized>(
    scheme: Scheme,
    _episode: usize,
    rng: &mut R,
) -> Result<[usize; N_AGENTS]> {
    match scheme {
        Scheme::Ensemble { k } if k >= 2 => Ok(std::array::from_fn(|_| rng.gen_range(0..k))),
        Scheme::Ensemble { k } => Err(Error::Config(format!("ensemble needs at least 2 members, got {k}"))),
        other => Err(Error::NotEnsemble(other.to_string())),
    }
}

/// Members for any scheme: random under ensembles, all zero otherwise.
pub fn episode_members<R: Rng + ?Sized>(scheme: Scheme, episode: usize, rng: &mut R) -> [usize; N_AGENTS] {
    match scheme {
        Scheme::Ensemble { .. } => select_ensemble_members(scheme, episode, rng).expect("valid ensemble"),
        _ => [0; N_AGENTS],
    }
}

/// Per-episode controller assignment, kept for bookkeeping.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Assignment {
    /// `slots[s]`: body driven by policy slot `s`.
    pub slots: [usize; N_AGENTS],
    pub members: [usize; N_AGENTS],
}
