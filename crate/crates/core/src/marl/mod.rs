//! Policy learning inside the world model: a shared decentralized actor, an
//! attention critic over all agents, generalized advantage estimates, the
//! clipped policy update and per-agent execution.

mod actor;
mod critic;
mod exec;
mod gae;
mod imagined;
mod ppo;

pub use actor::{Actor, MASKED_LOGIT};
pub use critic::Critic;
pub use exec::{AgentRunner, DecentralizedExecutor};
pub use gae::{gae, normalize_advantages};
pub use imagined::{actor_features, critic_features, critic_input_dim, imagined_batch};
pub use ppo::{clipped_surrogate, ppo_update, ratio_stats, PpoBatch, PpoConfig, PpoStats};
