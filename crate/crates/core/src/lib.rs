//! Bi-level latent-variable world models for cooperative multi-agent
//! reinforcement learning.
//!
//! Each agent carries a *global* latent (inferred from the full environment
//! state during training) and an *agent* latent (inferred from its own
//! observation only). The agent prior is conditioned on the global latent, so
//! global information shapes the agent representation while execution stays
//! decentralized. Policies are trained with MAPPO purely on imagined latent
//! trajectories.

pub mod envs;
pub mod error;
pub mod marl;
pub mod numerics;
pub mod trainer;
pub mod worldmodel;

pub use error::{Error, Result};
