//! The bi-level world model: recurrent embeddings, factorized posteriors and
//! priors, decoders and auxiliary heads, the joint loss and imagination.

mod checkpoint;
mod config;
mod imagine;
mod model;

pub use checkpoint::Checkpoint;
pub use config::{AblationMode, LossWeights, ModelConfig};
pub use imagine::{one_hot_rows, threshold_avail, ActOutput, FixedPolicy, ImaginedStep, LatentTrajectory, Policy};
pub use model::{
    bce_with_logits, BiLevelState, LatentMode, LossBreakdown, LossOptions, LossTrace, LossVars, StateVars,
    WorldModel,
};

#[cfg(test)]
mod tests;
