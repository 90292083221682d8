//! Multi-agent cooperative navigation lab: MADDPG training, linear intention
//! probes on recorded activations, and scripted-partner generalization tests.

pub mod env;
pub mod error;
pub mod eval;
pub mod maddpg;
pub mod nn;
pub mod pipeline;
pub mod probe;
pub mod record;
pub mod rng;
pub mod scripted;

pub use error::{Error, Result};
