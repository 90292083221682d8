use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::env::{Physics, HORIZON};
use crate::error::{Error, Result};

/// Training protocol variant.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Scheme {
    /// Fixed policy-to-body assignment.
    Vanilla,
    /// Random policy-to-body permutation, redrawn every episode.
    Shuffle,
    /// One parameter set controls every body.
    Shared,
    /// `k` interchangeable policies per slot, one drawn per episode.
    Ensemble { k: usize },
}

pub const DEFAULT_ENSEMBLE_SIZE: usize = 3;

impl Scheme {
    pub const ALL: [Scheme; 4] = [
        Scheme::Vanilla,
        Scheme::Shuffle,
        Scheme::Shared,
        Scheme::Ensemble { k: DEFAULT_ENSEMBLE_SIZE },
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Scheme::Vanilla => "vanilla",
            Scheme::Shuffle => "shuffle",
            Scheme::Shared => "shared",
            Scheme::Ensemble { .. } => "ensemble",
        }
    }

    /// Policies per slot.
    pub fn members(&self) -> usize {
        match *self {
            Scheme::Ensemble { k } => k,
            _ => 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            Scheme::Ensemble { k } if k < 2 => Err(Error::Config(format!(
                "ensemble needs at least 2 members, got {k}"
            ))),
            _ => Ok(()),
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Scheme::Ensemble { k } if k != DEFAULT_ENSEMBLE_SIZE => write!(f, "ensemble:{k}"),
            _ => f.write_str(self.name()),
        }
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let scheme = match s {
            "vanilla" => Scheme::Vanilla,
            "shuffle" => Scheme::Shuffle,
            "shared" => Scheme::Shared,
            "ensemble" => Scheme::Ensemble { k: DEFAULT_ENSEMBLE_SIZE },
            other => {
                let k = other
                    .strip_prefix("ensemble:")
                    .and_then(|k| k.parse().ok())
                    .ok_or_else(|| Error::Config(format!("unknown scheme {other:?}")))?;
                Scheme::Ensemble { k }
            }
        };
        scheme.validate()?;
        Ok(scheme)
    }
}

impl Serialize for Scheme {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Scheme {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub episodes: usize,
    pub horizon: usize,
    pub gamma: f64,
    pub tau: f64,
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub batch_size: usize,
    pub buffer_capacity: usize,
    pub update_interval_steps: usize,
    /// Transitions a replay buffer must hold before its learner is updated.
    pub learning_starts: usize,
    pub exploration_noise_std: f64,
    /// Per-tensor gradient norm limit.
    pub grad_clip: f64,
    /// Weight of the squared actor pre-activation penalty.
    pub actor_reg: f64,
    /// Whether the last step of an episode cuts the bootstrap. The horizon is
    /// a time limit, so by default it does not.
    pub terminal_at_horizon: bool,
    pub seed: u64,
    pub scheme: Scheme,
    pub physics: Physics,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            episodes: 100_000,
            horizon: HORIZON,
            gamma: 0.95,
            tau: 0.01,
            actor_lr: 0.01,
            critic_lr: 0.01,
            batch_size: 1024,
            buffer_capacity: 1_000_000,
            update_interval_steps: 100,
            learning_starts: 1024 * HORIZON,
            exploration_noise_std: 0.1,
            grad_clip: 0.5,
            actor_reg: 1e-3,
            terminal_at_horizon: false,
            seed: 0,
            scheme: Scheme::Vanilla,
            physics: Physics::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        self.scheme.validate()?;
        if self.horizon != HORIZON {
            return bad(format!("horizon must be {HORIZON}, got {}", self.horizon));
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return bad(format!("gamma must be in (0, 1), got {}", self.gamma));
        }
        if !(self.tau >= 0.0 && self.tau <= 1.0) {
            return bad(format!("tau must be in [0, 1], got {}", self.tau));
        }
        if self.batch_size == 0 || self.batch_size > self.buffer_capacity {
            return bad(format!(
                "batch size {} must be in 1..=buffer capacity {}",
                self.batch_size, self.buffer_capacity
            ));
        }
        if self.update_interval_steps == 0 {
            return bad("update interval must be positive".into());
        }
        if !(self.exploration_noise_std >= 0.0) {
            return bad("exploration noise must be non-negative".into());
        }
        if !(self.actor_lr > 0.0 && self.critic_lr > 0.0) {
            return bad("learning rates must be positive".into());
        }
        Ok(())
    }

    /// Buffer size required before updates start.
    pub fn warmup(&self) -> usize {
        self.learning_starts.max(self.batch_size)
    }
}
