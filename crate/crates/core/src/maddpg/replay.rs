use std::sync::Arc;

use rand::seq::index;
use rand::Rng;

use crate::env::{ACT_DIM, N_AGENTS, OBS_DIM};
use crate::error::{Error, Result};
use crate::nn::Matrix;

/// One joint step, stored in policy-slot order.
#[derive(Clone, Debug, PartialEq)]
pub struct Transition {
    pub observations: [[f64; OBS_DIM]; N_AGENTS],
    pub actions: [[f64; ACT_DIM]; N_AGENTS],
    pub rewards: [f64; N_AGENTS],
    pub next_observations: [[f64; OBS_DIM]; N_AGENTS],
    pub terminal: bool,
    /// Ensemble member that acted in each slot (all zero outside ensembles).
    pub members: [u8; N_AGENTS],
}

/// Fixed-capacity ring of transitions. Transitions are reference counted so
/// several buffers can hold the same step.
#[derive(Clone, Debug)]
pub struct ReplayBuffer {
    capacity: usize,
    items: Vec<Arc<Transition>>,
    next: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        ReplayBuffer {
            capacity,
            items: Vec::new(),
            next: 0,
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn push(&mut self, t: Arc<Transition>) {
        if self.items.len() < self.capacity {
            self.items.push(t);
        } else {
            self.items[self.next] = t;
        }
        self.next = (self.next + 1) % self.capacity;
    }

    pub fn get(&self, i: usize) -> &Transition {
        &self.items[i]
    }

    /// `batch` distinct indices drawn uniformly.
    pub fn sample_indices<R: Rng + ?Sized>(&self, batch: usize, rng: &mut R) -> Result<Vec<usize>> {
        if self.items.len() < batch {
            return Err(Error::InsufficientBuffer {
                size: self.items.len(),
                needed: batch,
            });
        }
        Ok(index::sample(rng, self.items.len(), batch).into_vec())
    }

    pub fn sample<R: Rng + ?Sized>(&self, batch: usize, rng: &mut R) -> Result<Batch> {
        let idx = self.sample_indices(batch, rng)?;
        Ok(Batch::gather(idx.iter().map(|&i| self.get(i))))
    }
}

/// Column-organised minibatch: one matrix per policy slot.
#[derive(Clone, Debug)]
pub struct Batch {
    pub observations: [Matrix; N_AGENTS],
    pub actions: [Matrix; N_AGENTS],
    pub next_observations: [Matrix; N_AGENTS],
    /// Reward seen by each slot, `rewards[slot][row]`.
    pub rewards: [Vec<f64>; N_AGENTS],
    pub terminal: Vec<bool>,
    pub members: Vec<[u8; N_AGENTS]>,
}

impl Batch {
    pub fn gather<'a>(items: impl ExactSizeIterator<Item = &'a Transition>) -> Batch {
        let n = items.len();
        let mut b = Batch {
            observations: std::array::from_fn(|_| Matrix::zeros(n, OBS_DIM)),
            actions: std::array::from_fn(|_| Matrix::zeros(n, ACT_DIM)),
            next_observations: std::array::from_fn(|_| Matrix::zeros(n, OBS_DIM)),
            rewards: std::array::from_fn(|_| vec![0.0; n]),
            terminal: Vec::with_capacity(n),
            members: Vec::with_capacity(n),
        };
        for (r, t) in items.enumerate() {
            for s in 0..N_AGENTS {
                b.observations[s].row_mut(r).copy_from_slice(&t.observations[s]);
                b.actions[s].row_mut(r).copy_from_slice(&t.actions[s]);
                b.next_observations[s].row_mut(r).copy_from_slice(&t.next_observations[s]);
                b.rewards[s][r] = t.rewards[s];
            }
            b.terminal.push(t.terminal);
            b.members.push(t.members);
        }
        b
    }

    pub fn len(&self) -> usize {
        self.terminal.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terminal.is_empty()
    }
}
