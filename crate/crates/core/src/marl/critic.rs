use rand::Rng;

use crate::numerics::{Activation, Binding, Graph, Linear, Mlp, ParamStore, Tensor, Var};

/// Centralized value function. Each agent's features form one token; a
/// single attention layer mixes tokens of the same environment instance
/// before a shared value head.
#[derive(Clone, Debug)]
pub struct Critic {
    pub params: ParamStore,
    pub n_agents: usize,
    embed: Linear,
    query: Linear,
    key: Linear,
    value: Linear,
    head: Mlp,
    activation: Activation,
}

impl Critic {
    pub fn new(
        inputs: usize,
        n_agents: usize,
        width: usize,
        depth: usize,
        activation: Activation,
        rng: &mut (impl Rng + ?Sized),
    ) -> Self {
        let mut params = ParamStore::new();
        let embed = Linear::new(&mut params, "critic.embed", inputs, width, rng);
        let query = Linear::new(&mut params, "critic.query", width, width, rng);
        let key = Linear::new(&mut params, "critic.key", width, width, rng);
        let value = Linear::new(&mut params, "critic.value", width, width, rng);
        let head = Mlp::new(&mut params, "critic.head", 2 * width, width, depth, 1, activation, rng);
        Self { params, n_agents, embed, query, key, value, head, activation }
    }

    /// Values `[rows, 1]`; rows are grouped by `n_agents` consecutive agents.
    pub fn forward(&self, g: &mut Graph, p: &Binding, inputs: Var) -> Var {
        let e = self.embed.forward(g, p, inputs);
        let e = self.activation.apply(g, e);
        let q = self.query.forward(g, p, e);
        let k = self.key.forward(g, p, e);
        let v = self.value.forward(g, p, e);
        let att = g.grouped_attention(q, k, v, self.n_agents);
        let x = g.concat_cols(&[e, att]);
        self.head.forward(g, p, x)
    }

    pub fn values(&self, inputs: &Tensor) -> Vec<f64> {
        let mut g = Graph::new();
        let p = self.params.bind(&mut g, false);
        let x = g.constant(inputs.clone());
        let v = self.forward(&mut g, &p, x);
        g.value(v).data().to_vec()
    }

    /// Value head applied to `[e, v(e)]`, i.e. attention over a single
    /// token.
    pub fn values_without_attention(&self, inputs: &Tensor) -> Vec<f64> {
        let mut g = Graph::new();
        let p = self.params.bind(&mut g, false);
        let x = g.constant(inputs.clone());
        let e = self.embed.forward(&mut g, &p, x);
        let e = self.activation.apply(&mut g, e);
        let v = self.value.forward(&mut g, &p, e);
        let x = g.concat_cols(&[e, v]);
        let out = self.head.forward(&mut g, &p, x);
        g.value(out).data().to_vec()
    }
}
