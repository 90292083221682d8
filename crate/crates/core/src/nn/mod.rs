//! Dense MLPs with hand-written reverse-mode gradients.

mod adam;
pub mod checkpoint;
mod matrix;
mod mlp;

use rand::Rng;

pub use adam::{Adam, AdamConfig};
pub use matrix::{gemm, Matrix, Op, View};
pub use mlp::{
    clip_per_tensor, logistic, soft_update, BatchTrace, ForwardTrace, Gradients, Mlp, MlpSpec,
    OutputActivation, Want, HIDDEN_WIDTH, N_LAYERS,
};

use crate::error::Result;

/// A trainable network: live parameters, the slowly tracking target copy and
/// the optimizer moments.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamSet {
    pub online: Mlp,
    pub target: Mlp,
    pub optimizer: Adam,
}

impl ParamSet {
    pub fn init<R: Rng + ?Sized>(spec: MlpSpec, rng: &mut R) -> Self {
        ParamSet::from_online(Mlp::init(spec, rng))
    }

    pub fn from_online(online: Mlp) -> Self {
        ParamSet {
            target: online.clone(),
            optimizer: Adam::new(online.params().len()),
            online,
        }
    }

    pub fn spec(&self) -> &MlpSpec {
        self.online.spec()
    }

    pub fn adam_step(&mut self, grads: &[f64], lr: f64) -> Result<()> {
        self.optimizer.step(self.online.params_mut(), grads, lr)
    }

    pub fn soft_update(&mut self, tau: f64) -> Result<()> {
        soft_update(&mut self.target, &self.online, tau)
    }
}
