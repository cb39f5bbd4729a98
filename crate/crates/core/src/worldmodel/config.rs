use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::envs::MarkovGame;
use crate::error::{Error, Result};
use crate::numerics::dist::DEFAULT_UNIMIX;
use crate::numerics::Activation;

/// Which levels of latent the model carries.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AblationMode {
    /// One global latent per agent plus one agent latent per agent.
    Full,
    /// Agent latents only.
    NoGlobal,
    /// One global latent shared by all agents of an environment instance.
    SingleGlobal,
}

impl AblationMode {
    pub const ALL: [AblationMode; 3] = [AblationMode::Full, AblationMode::SingleGlobal, AblationMode::NoGlobal];

    pub fn as_str(self) -> &'static str {
        match self {
            AblationMode::Full => "full",
            AblationMode::NoGlobal => "no_global",
            AblationMode::SingleGlobal => "single_global",
        }
    }

    pub fn has_global(self) -> bool {
        self != AblationMode::NoGlobal
    }
}

impl fmt::Display for AblationMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AblationMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(AblationMode::Full),
            "no_global" => Ok(AblationMode::NoGlobal),
            "single_global" => Ok(AblationMode::SingleGlobal),
            other => Err(Error::Config(format!(
                "unknown ablation mode `{other}` (expected full, no_global or single_global)"
            ))),
        }
    }
}

/// Multipliers of the seven loss components.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub recon: f64,
    pub kl_agent: f64,
    pub kl_global: f64,
    pub reward: f64,
    pub term: f64,
    pub avail: f64,
    pub action: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self { recon: 1.0, kl_agent: 1.0, kl_global: 1.0, reward: 1.0, term: 1.0, avail: 1.0, action: 1.0 }
    }
}

impl LossWeights {
    /// Only the variational-bound terms.
    pub fn elbo_only() -> Self {
        Self { reward: 0.0, term: 0.0, avail: 0.0, action: 0.0, ..Self::default() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub n_agents: usize,
    pub state_dim: usize,
    pub obs_dim: usize,
    pub action_count: usize,
    pub agent_categoricals: usize,
    pub agent_classes: usize,
    pub global_categoricals: usize,
    pub global_classes: usize,
    pub agent_hidden: usize,
    pub global_hidden: usize,
    pub mlp_width: usize,
    pub mlp_depth: usize,
    pub activation: Activation,
    pub unimix: f64,
    pub kl_alpha: f64,
    pub mode: AblationMode,
    pub weights: LossWeights,
}

impl ModelConfig {
    /// Desk-scale defaults for the dimensions of `env`.
    pub fn for_env(env: &dyn MarkovGame) -> Self {
        Self {
            n_agents: env.n_agents(),
            state_dim: env.state_dim(),
            obs_dim: env.obs_dim(),
            action_count: env.action_count(),
            agent_categoricals: 8,
            agent_classes: 8,
            global_categoricals: 8,
            global_classes: 8,
            agent_hidden: 64,
            global_hidden: 64,
            mlp_width: 64,
            mlp_depth: 2,
            activation: Activation::Relu,
            unimix: DEFAULT_UNIMIX,
            kl_alpha: 0.8,
            mode: AblationMode::Full,
            weights: LossWeights::default(),
        }
    }

    pub fn agent_latent(&self) -> usize {
        self.agent_categoricals * self.agent_classes
    }

    pub fn global_latent(&self) -> usize {
        if self.mode.has_global() {
            self.global_categoricals * self.global_classes
        } else {
            0
        }
    }

    pub fn global_hidden_dim(&self) -> usize {
        if self.mode.has_global() {
            self.global_hidden
        } else {
            0
        }
    }

    /// Rows of global tensors for `batch` environment instances.
    pub fn global_rows(&self, batch: usize) -> usize {
        match self.mode {
            AblationMode::Full => batch * self.n_agents,
            AblationMode::SingleGlobal => batch,
            AblationMode::NoGlobal => 0,
        }
    }

    /// Width of `[z^a, z^g, h^a, h^g]` (global parts absent without a
    /// global level).
    pub fn feature_dim(&self) -> usize {
        self.agent_latent() + self.global_latent() + self.agent_hidden + self.global_hidden_dim()
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("n_agents", self.n_agents),
            ("state_dim", self.state_dim),
            ("obs_dim", self.obs_dim),
            ("action_count", self.action_count),
            ("agent_categoricals", self.agent_categoricals),
            ("agent_classes", self.agent_classes),
            ("global_categoricals", self.global_categoricals),
            ("global_classes", self.global_classes),
            ("agent_hidden", self.agent_hidden),
            ("global_hidden", self.global_hidden),
            ("mlp_width", self.mlp_width),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("{name} must be positive")));
        }
        if !(0.0..1.0).contains(&self.unimix) {
            return Err(Error::Config(format!("unimix {} outside [0, 1)", self.unimix)));
        }
        if !(0.0..=1.0).contains(&self.kl_alpha) {
            return Err(Error::Config(format!("kl_alpha {} outside [0, 1]", self.kl_alpha)));
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form.
    pub fn fingerprint(&self) -> [u8; 32] {
        let json = serde_json::to_string(self).expect("config serializes");
        Sha256::digest(json.as_bytes()).into()
    }
}
