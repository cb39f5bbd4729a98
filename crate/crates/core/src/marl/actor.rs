use rand::{Rng, RngCore};

use crate::error::Result;
use crate::numerics::dist::{argmax_one_hot, sample_one_hot};
use crate::numerics::{Activation, Binding, Graph, Mlp, ParamStore, Tensor, Var};
use crate::worldmodel::{ActOutput, Policy};

/// Logit offset for unavailable actions; far enough below any real logit
/// that their softmax probability is exactly zero.
pub const MASKED_LOGIT: f64 = -1e9;

/// Shared decentralized policy over `[z^a, h^a]`.
#[derive(Clone, Debug)]
pub struct Actor {
    pub params: ParamStore,
    pub net: Mlp,
    pub action_count: usize,
}

impl Actor {
    pub fn new(
        inputs: usize,
        action_count: usize,
        width: usize,
        depth: usize,
        activation: Activation,
        rng: &mut (impl Rng + ?Sized),
    ) -> Self {
        let mut params = ParamStore::new();
        let net = Mlp::new(&mut params, "actor", inputs, width, depth, action_count, activation, rng);
        Self { params, net, action_count }
    }

    /// Masked log-probabilities `[rows, A]`.
    pub fn log_probs(&self, g: &mut Graph, p: &Binding, inputs: Var, avail: &Tensor) -> Var {
        let logits = self.net.forward(g, p, inputs);
        let offset = g.constant(avail.map(|a| if a > 0.0 { 0.0 } else { MASKED_LOGIT }));
        let masked = g.add(logits, offset);
        g.log_softmax_groups(masked, self.action_count)
    }

    /// Masked action probabilities for `[z^a, h^a]` rows.
    pub fn probs(&self, z_agent: &Tensor, h_agent: &Tensor, avail: &Tensor) -> Tensor {
        self.probs_on(&Tensor::concat_cols(&[z_agent, h_agent]), avail)
    }

    pub fn probs_on(&self, inputs: &Tensor, avail: &Tensor) -> Tensor {
        let mut g = Graph::new();
        let p = self.params.bind(&mut g, false);
        let x = g.constant(inputs.clone());
        let lp = self.log_probs(&mut g, &p, x, avail);
        g.value(lp).map(f64::exp)
    }

    /// Sample (or take the most likely) action per row.
    pub fn act(&self, z_agent: &Tensor, h_agent: &Tensor, avail: &Tensor, greedy: bool, rng: &mut (impl Rng + ?Sized)) -> ActOutput {
        self.act_on(&Tensor::concat_cols(&[z_agent, h_agent]), avail, greedy, rng)
    }

    pub fn act_on(&self, inputs: &Tensor, avail: &Tensor, greedy: bool, rng: &mut (impl Rng + ?Sized)) -> ActOutput {
        let probs = self.probs_on(inputs, avail);
        let a = self.action_count;
        let picks = if greedy { argmax_one_hot(probs.data(), a) } else { sample_one_hot(probs.data(), a, rng) };
        let actions: Vec<usize> = picks.chunks(a).map(|r| r.iter().position(|&v| v == 1.0).unwrap()).collect();
        let log_probs = actions.iter().enumerate().map(|(r, &i)| probs.at(r, i).ln()).collect();
        ActOutput { actions, log_probs }
    }
}

impl Policy for Actor {
    fn act(&mut self, z_agent: &Tensor, h_agent: &Tensor, avail: &Tensor, rng: &mut dyn RngCore) -> Result<ActOutput> {
        Ok(Actor::act(self, z_agent, h_agent, avail, false, rng))
    }
}
