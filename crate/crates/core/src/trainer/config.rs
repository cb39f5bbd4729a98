use std::fmt::Write as _;

use crate::envs::{make_env, MarkovGame};
use crate::error::{Error, Result};
use crate::marl::PpoConfig;
use crate::numerics::Activation;
use crate::worldmodel::{AblationMode, LossWeights, ModelConfig};

macro_rules! run_config {
    ($($(#[$doc:meta])* $name:ident : $ty:ty = $default:expr, $kind:literal;)*) => {
        /// Every knob of a training run. Each field is addressable by its
        /// name as a flat `key = value` pair.
        #[derive(Clone, Debug, PartialEq)]
        pub struct RunConfig {
            $($(#[$doc])* pub $name: $ty,)*
        }

        impl Default for RunConfig {
            fn default() -> Self {
                Self { $($name: $default,)* }
            }
        }

        impl RunConfig {
            pub const KEYS: &'static [&'static str] = &[$(stringify!($name)),*];

            /// Parse `value` into the field named `key`.
            pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
                match key {
                    $(stringify!($name) => {
                        self.$name = value.parse::<$ty>().map_err(|_| {
                            Error::Config(format!("{key}: expected {}, got `{value}`", $kind))
                        })?;
                    })*
                    _ => return Err(Error::Config(format!("unknown config key `{key}`"))),
                }
                Ok(())
            }

            pub fn get(&self, key: &str) -> Option<String> {
                match key {
                    $(stringify!($name) => Some(self.$name.to_string()),)*
                    _ => None,
                }
            }
        }
    };
}

run_config! {
    env: String = "corridor_meet".into(), "an environment name";
    mode: AblationMode = AblationMode::Full, "full, no_global or single_global";
    seed: u64 = 0, "an unsigned integer";
    /// Upper bound on collected episodes (N).
    episodes: usize = 200, "an unsigned integer";
    /// Stop once this many real steps were collected; 0 disables the bound.
    max_env_steps: usize = 0, "an unsigned integer";
    /// Episodes collected per model/policy round.
    episodes_per_iter: usize = 1, "an unsigned integer";
    /// Leading episodes that skip the policy phase.
    warmup: usize = 5, "an unsigned integer";
    /// Sequence length L of model and start windows.
    window: usize = 20, "an unsigned integer";
    /// Imagination horizon H.
    horizon: usize = 5, "an unsigned integer";
    /// Model optimizer steps per round (M).
    model_steps: usize = 20, "an unsigned integer";
    /// Policy rounds per round (R).
    policy_steps: usize = 10, "an unsigned integer";
    model_batch: usize = 16, "an unsigned integer";
    policy_batch: usize = 16, "an unsigned integer";
    model_lr: f64 = 1e-3, "a number";
    actor_lr: f64 = 5e-4, "a number";
    critic_lr: f64 = 5e-4, "a number";
    gamma: f64 = 0.99, "a number";
    gae_lambda: f64 = 0.95, "a number";
    ppo_epochs: usize = 5, "an unsigned integer";
    clip_eps: f64 = 0.2, "a number";
    entropy_coef: f64 = 0.001, "a number";
    /// Per-update multiplier of the entropy coefficient.
    entropy_anneal: f64 = 0.99998, "a number";
    value_coef: f64 = 0.5, "a number";
    grad_clip: f64 = 100.0, "a number";
    agent_categoricals: usize = 8, "an unsigned integer";
    agent_classes: usize = 8, "an unsigned integer";
    global_categoricals: usize = 8, "an unsigned integer";
    global_classes: usize = 8, "an unsigned integer";
    agent_hidden: usize = 64, "an unsigned integer";
    global_hidden: usize = 64, "an unsigned integer";
    mlp_width: usize = 64, "an unsigned integer";
    mlp_depth: usize = 2, "an unsigned integer";
    policy_width: usize = 64, "an unsigned integer";
    policy_depth: usize = 2, "an unsigned integer";
    activation: Activation = Activation::Relu, "relu or elu";
    kl_alpha: f64 = 0.8, "a number";
    unimix: f64 = 0.01, "a number";
    /// Model buffer capacity in steps.
    buffer_capacity: usize = 100_000, "an unsigned integer";
    /// Rounds between evaluations; 0 evaluates only at the end.
    eval_every: usize = 10, "an unsigned integer";
    eval_episodes: usize = 10, "an unsigned integer";
    /// Feed the critic only the global half of the model features.
    critic_global_only: bool = false, "true or false";
    /// Rounds between checkpoints; 0 writes only the final one.
    checkpoint_every: usize = 0, "an unsigned integer";
}

impl RunConfig {
    /// Reject anything out of range before any work starts.
    pub fn validate(&self) -> Result<()> {
        make_env(&self.env)?;
        let positive = [
            ("episodes", self.episodes),
            ("episodes_per_iter", self.episodes_per_iter),
            ("horizon", self.horizon),
            ("model_batch", self.model_batch),
            ("policy_batch", self.policy_batch),
            ("ppo_epochs", self.ppo_epochs),
            ("agent_categoricals", self.agent_categoricals),
            ("agent_classes", self.agent_classes),
            ("global_categoricals", self.global_categoricals),
            ("global_classes", self.global_classes),
            ("agent_hidden", self.agent_hidden),
            ("global_hidden", self.global_hidden),
            ("mlp_width", self.mlp_width),
            ("policy_width", self.policy_width),
            ("buffer_capacity", self.buffer_capacity),
            ("eval_episodes", self.eval_episodes),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("{name} must be at least 1")));
        }
        if self.window < 2 {
            return Err(Error::Config(format!("window must be at least 2, got {}", self.window)));
        }
        let unit = [("gamma", self.gamma), ("gae_lambda", self.gae_lambda), ("kl_alpha", self.kl_alpha), ("entropy_anneal", self.entropy_anneal)];
        for (name, v) in unit {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Config(format!("{name} must lie in [0, 1], got {v}")));
            }
        }
        if !(0.0..1.0).contains(&self.unimix) {
            return Err(Error::Config(format!("unimix must lie in [0, 1), got {}", self.unimix)));
        }
        let pos = [
            ("model_lr", self.model_lr),
            ("actor_lr", self.actor_lr),
            ("critic_lr", self.critic_lr),
            ("clip_eps", self.clip_eps),
            ("grad_clip", self.grad_clip),
        ];
        for (name, v) in pos {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive and finite, got {v}")));
            }
        }
        for (name, v) in [("entropy_coef", self.entropy_coef), ("value_coef", self.value_coef)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be non-negative and finite, got {v}")));
            }
        }
        Ok(())
    }

    /// `key = value` lines in field order; parses back to an equal config.
    pub fn to_kv_text(&self) -> String {
        let mut out = String::new();
        for key in Self::KEYS {
            writeln!(out, "{key} = {}", self.get(key).expect("known key")).unwrap();
        }
        out
    }

    pub fn make_env(&self) -> Result<Box<dyn MarkovGame>> {
        make_env(&self.env)
    }

    pub fn model_config(&self, env: &dyn MarkovGame) -> ModelConfig {
        ModelConfig {
            agent_categoricals: self.agent_categoricals,
            agent_classes: self.agent_classes,
            global_categoricals: self.global_categoricals,
            global_classes: self.global_classes,
            agent_hidden: self.agent_hidden,
            global_hidden: self.global_hidden,
            mlp_width: self.mlp_width,
            mlp_depth: self.mlp_depth,
            activation: self.activation,
            unimix: self.unimix,
            kl_alpha: self.kl_alpha,
            mode: self.mode,
            weights: LossWeights::default(),
            ..ModelConfig::for_env(env)
        }
    }

    pub fn ppo_config(&self, entropy_coef: f64) -> PpoConfig {
        PpoConfig {
            epochs: self.ppo_epochs,
            clip_eps: self.clip_eps,
            entropy_coef,
            value_coef: self.value_coef,
            max_grad_norm: self.grad_clip,
            normalize_advantages: true,
        }
    }
}
