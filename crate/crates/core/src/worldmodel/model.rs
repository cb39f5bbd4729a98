use rand::Rng;

use super::config::{AblationMode, ModelConfig};
use crate::envs::Batch;
use crate::error::{Error, Result};
use crate::numerics::dist::sample_one_hot;
use crate::numerics::{Binding, CategoricalVars, Graph, Gru, Mlp, ParamStore, Tensor, Var};

/// How latents enter downstream computation.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LatentMode {
    /// Straight-through one-hot samples.
    Sample,
    /// The probabilities themselves; smooth and deterministic.
    Mean,
}

impl LatentMode {
    pub fn latent(self, g: &mut Graph, dist: &CategoricalVars, rng: &mut (impl Rng + ?Sized)) -> Var {
        match self {
            LatentMode::Sample => dist.sample_st(g, rng),
            LatentMode::Mean => dist.mean(),
        }
    }
}

/// Recurrent embeddings and latents of every agent of `batch` environment
/// instances at one time step. Agent tensors have `batch * n_agents` rows;
/// global tensors have one row per agent (or one per instance when the
/// global latent is shared) and are absent without a global level.
#[derive(Clone, Debug, PartialEq)]
pub struct BiLevelState {
    pub batch: usize,
    pub h_agent: Tensor,
    pub h_global: Option<Tensor>,
    pub z_agent: Tensor,
    pub z_global: Option<Tensor>,
    /// Latents come from the representation (posterior) networks.
    pub posterior: bool,
}

/// Graph handles of a [`BiLevelState`].
#[derive(Clone, Copy, Debug)]
pub struct StateVars {
    pub h_agent: Var,
    pub h_global: Option<Var>,
    pub z_agent: Var,
    pub z_global: Option<Var>,
}

impl StateVars {
    pub fn constants(g: &mut Graph, s: &BiLevelState) -> Self {
        Self {
            h_agent: g.constant(s.h_agent.clone()),
            h_global: s.h_global.as_ref().map(|t| g.constant(t.clone())),
            z_agent: g.constant(s.z_agent.clone()),
            z_global: s.z_global.as_ref().map(|t| g.constant(t.clone())),
        }
    }

    pub fn values(&self, g: &Graph, batch: usize, posterior: bool) -> BiLevelState {
        BiLevelState {
            batch,
            h_agent: g.value(self.h_agent).clone(),
            h_global: self.h_global.map(|v| g.value(v).clone()),
            z_agent: g.value(self.z_agent).clone(),
            z_global: self.z_global.map(|v| g.value(v).clone()),
            posterior,
        }
    }
}

/// Named scalar components of the model loss. Each field already includes
/// its weight, so `total` is their plain sum.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LossBreakdown {
    pub recon_nll: f64,
    pub kl_agent: f64,
    pub kl_global: f64,
    pub reward_nll: f64,
    pub term_nll: f64,
    pub avail_nll: f64,
    pub action_nll: f64,
    pub total: f64,
}

impl LossBreakdown {
    pub const NAMES: [&'static str; 7] =
        ["recon_nll", "kl_agent", "kl_global", "reward_nll", "term_nll", "avail_nll", "action_nll"];

    pub fn components(&self) -> [f64; 7] {
        [
            self.recon_nll,
            self.kl_agent,
            self.kl_global,
            self.reward_nll,
            self.term_nll,
            self.avail_nll,
            self.action_nll,
        ]
    }

    pub fn component_sum(&self) -> f64 {
        self.components().iter().sum()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossOptions {
    pub latent: LatentMode,
    /// Replace each prior by its posterior (testing only).
    pub prior_equals_posterior: bool,
    /// Route KL gradients with the balancing weight. When off, the KL
    /// terms have the same value but their exact gradient.
    pub balanced_kl: bool,
    pub trace: bool,
}

impl Default for LossOptions {
    fn default() -> Self {
        Self { latent: LatentMode::Sample, prior_equals_posterior: false, balanced_kl: true, trace: false }
    }
}

/// Per-frame intermediate values of one loss evaluation.
#[derive(Clone, Debug, Default)]
pub struct LossTrace {
    pub posterior_agent_logits: Vec<Tensor>,
    pub prior_agent_logits: Vec<Tensor>,
    pub posterior_global_logits: Vec<Tensor>,
    pub prior_global_logits: Vec<Tensor>,
    pub decoded_obs: Vec<Tensor>,
    /// Mean squared reconstruction error per observation dimension over
    /// valid entries.
    pub recon_mse: f64,
}

pub struct LossVars {
    pub total: Var,
    pub breakdown: LossBreakdown,
    pub trace: Option<LossTrace>,
}

/// The bi-level world model with its single shared parameter set.
#[derive(Clone, Debug)]
pub struct WorldModel {
    pub config: ModelConfig,
    pub params: ParamStore,
    recurrent_agent: Gru,
    recurrent_global: Option<Gru>,
    repr_agent: Mlp,
    repr_global: Option<Mlp>,
    trans_agent: Mlp,
    trans_global: Option<Mlp>,
    obs_decoder: Mlp,
    reward_head: Mlp,
    term_head: Mlp,
    avail_head: Mlp,
    action_decoder: Mlp,
}

impl WorldModel {
    pub const COMPONENTS: [&'static str; 11] = [
        "recurrent_agent",
        "recurrent_global",
        "repr_agent",
        "repr_global",
        "trans_agent",
        "trans_global",
        "obs_decoder",
        "reward_head",
        "term_head",
        "avail_head",
        "action_decoder",
    ];

    pub fn new(config: ModelConfig, rng: &mut (impl Rng + ?Sized)) -> Result<Self> {
        config.validate()?;
        let c = &config;
        let mut store = ParamStore::new();
        let (za, zg) = (c.agent_latent(), c.global_latent());
        let (ha, hg) = (c.agent_hidden, c.global_hidden_dim());
        let (w, d, act) = (c.mlp_width, c.mlp_depth, c.activation);
        let a = c.action_count;
        let global = c.mode.has_global();

        let recurrent_agent = Gru::new(&mut store, "recurrent_agent", za + a, ha, rng);
        let recurrent_global =
            global.then(|| Gru::new(&mut store, "recurrent_global", zg + c.n_agents * a, hg, rng));
        let repr_agent = Mlp::new(&mut store, "repr_agent", c.obs_dim + ha, w, d, za, act, rng);
        let repr_global = global.then(|| Mlp::new(&mut store, "repr_global", c.state_dim + za + hg, w, d, zg, act, rng));
        let trans_agent = Mlp::new(&mut store, "trans_agent", ha + zg, w, d, za, act, rng);
        let trans_global = global.then(|| Mlp::new(&mut store, "trans_global", hg, w, d, zg, act, rng));
        let obs_decoder = Mlp::new(&mut store, "obs_decoder", ha + za, w, d, c.obs_dim, act, rng);
        let reward_head = Mlp::new(&mut store, "reward_head", za + ha, w, d, 1, act, rng);
        let f = c.feature_dim();
        let term_head = Mlp::new(&mut store, "term_head", f, w, d, 1, act, rng);
        let avail_head = Mlp::new(&mut store, "avail_head", f, w, d, a, act, rng);
        let action_decoder = Mlp::new(&mut store, "action_decoder", f, w, d, a, act, rng);
        Ok(Self {
            config,
            params: store,
            recurrent_agent,
            recurrent_global,
            repr_agent,
            repr_global,
            trans_agent,
            trans_global,
            obs_decoder,
            reward_head,
            term_head,
            avail_head,
            action_decoder,
        })
    }

    pub fn mode(&self) -> AblationMode {
        self.config.mode
    }

    pub fn head_mlps(&self) -> [&Mlp; 5] {
        [&self.obs_decoder, &self.reward_head, &self.term_head, &self.avail_head, &self.action_decoder]
    }

    pub fn repr_agent_mlp(&self) -> &Mlp {
        &self.repr_agent
    }

    /// Zero hidden embeddings and uniformly drawn one-hot latents.
    pub fn init_state(&self, batch: usize, rng: &mut (impl Rng + ?Sized)) -> BiLevelState {
        assert!(batch > 0, "batch must be positive");
        let c = &self.config;
        let rows = batch * c.n_agents;
        let grows = c.global_rows(batch);
        BiLevelState {
            batch,
            h_agent: Tensor::zeros(&[rows, c.agent_hidden]),
            h_global: c.mode.has_global().then(|| Tensor::zeros(&[grows, c.global_hidden])),
            z_agent: uniform_one_hot(rows, c.agent_categoricals, c.agent_classes, rng),
            z_global: c
                .mode
                .has_global()
                .then(|| uniform_one_hot(grows, c.global_categoricals, c.global_classes, rng)),
            posterior: false,
        }
    }

    fn expect_cols(&self, g: &Graph, v: Var, cols: usize, what: &str) -> Result<()> {
        let got = g.value(v).cols();
        if got != cols {
            return Err(Error::Contract(format!("{what}: expected {cols} columns, got {got}")));
        }
        Ok(())
    }

    fn expect_rows(&self, g: &Graph, vars: &[Var], what: &str) -> Result<usize> {
        let r = g.value(vars[0]).rows();
        if vars.iter().any(|v| g.value(*v).rows() != r) {
            return Err(Error::Contract(format!("{what}: inputs disagree on row count")));
        }
        Ok(r)
    }

    /// `h^a_t = GRU(h^a_{t-1}, [z^a_{t-1}, a^i_{t-1}])`; every row uses only
    /// its own agent's inputs.
    pub fn recurrent_step_agent(&self, g: &mut Graph, p: &Binding, h_agent: Var, z_prev: Var, own_action: Var) -> Result<Var> {
        let c = &self.config;
        self.expect_cols(g, h_agent, c.agent_hidden, "recurrent_step_agent h")?;
        self.expect_cols(g, z_prev, c.agent_latent(), "recurrent_step_agent z")?;
        self.expect_cols(g, own_action, c.action_count, "recurrent_step_agent action")?;
        self.expect_rows(g, &[h_agent, z_prev, own_action], "recurrent_step_agent")?;
        let x = g.concat_cols(&[z_prev, own_action]);
        Ok(self.recurrent_agent.forward(g, p, x, h_agent))
    }

    /// `h^g_t = GRU(h^g_{t-1}, [z^g_{t-1}, a_{t-1}])` with the joint action.
    pub fn recurrent_step_global(&self, g: &mut Graph, p: &Binding, h_global: Var, z_prev: Var, joint_action: Var) -> Result<Var> {
        let c = &self.config;
        let gru = self.recurrent_global.as_ref().ok_or_else(no_global)?;
        self.expect_cols(g, h_global, c.global_hidden, "recurrent_step_global h")?;
        self.expect_cols(g, z_prev, c.global_latent(), "recurrent_step_global z")?;
        self.expect_cols(g, joint_action, c.n_agents * c.action_count, "recurrent_step_global action")?;
        self.expect_rows(g, &[h_global, z_prev, joint_action], "recurrent_step_global")?;
        let x = g.concat_cols(&[z_prev, joint_action]);
        Ok(gru.forward(g, p, x, h_global))
    }

    /// `q(z^a | o, h^a)`. Takes no state and no other agent's data.
    pub fn posterior_agent(&self, g: &mut Graph, p: &Binding, obs: Var, h_agent: Var) -> CategoricalVars {
        let x = g.concat_cols(&[obs, h_agent]);
        let logits = self.repr_agent.forward(g, p, x);
        CategoricalVars::from_logits(g, logits, self.config.agent_classes, self.config.unimix)
    }

    /// `q(z^g | s, z^a, h^g)`. `state` has one row per global row; `z_agent`
    /// has one row per agent and is averaged per instance when the global
    /// latent is shared.
    pub fn posterior_global(&self, g: &mut Graph, p: &Binding, state: Var, z_agent: Var, h_global: Var) -> Result<CategoricalVars> {
        let net = self.repr_global.as_ref().ok_or_else(no_global)?;
        let za = match self.config.mode {
            AblationMode::SingleGlobal => g.mean_row_groups(z_agent, self.config.n_agents),
            _ => z_agent,
        };
        self.expect_rows(g, &[state, za, h_global], "posterior_global")?;
        let x = g.concat_cols(&[state, za, h_global]);
        let logits = net.forward(g, p, x);
        Ok(CategoricalVars::from_logits(g, logits, self.config.global_classes, self.config.unimix))
    }

    /// `p(ẑ^g | h^g)`.
    pub fn prior_global(&self, g: &mut Graph, p: &Binding, h_global: Var) -> Result<CategoricalVars> {
        let net = self.trans_global.as_ref().ok_or_else(no_global)?;
        let logits = net.forward(g, p, h_global);
        Ok(CategoricalVars::from_logits(g, logits, self.config.global_classes, self.config.unimix))
    }

    /// Global rows broadcast to one row per agent.
    pub fn to_agent_rows(&self, g: &mut Graph, x: Var) -> Var {
        match self.config.mode {
            AblationMode::SingleGlobal => g.repeat_rows(x, self.config.n_agents),
            _ => x,
        }
    }

    /// `p(ẑ^a | h^a, z^g)`, or `p(ẑ^a | h^a)` without a global level.
    /// `z_global` has global rows.
    pub fn prior_agent(&self, g: &mut Graph, p: &Binding, h_agent: Var, z_global: Option<Var>) -> CategoricalVars {
        let x = match z_global {
            Some(zg) => {
                let zg = self.to_agent_rows(g, zg);
                g.concat_cols(&[h_agent, zg])
            }
            None => h_agent,
        };
        let logits = self.trans_agent.forward(g, p, x);
        CategoricalVars::from_logits(g, logits, self.config.agent_classes, self.config.unimix)
    }

    pub fn decode_observation(&self, g: &mut Graph, p: &Binding, h_agent: Var, z_agent: Var) -> Var {
        let x = g.concat_cols(&[h_agent, z_agent]);
        self.obs_decoder.forward(g, p, x)
    }

    /// Reward mean from the agent level only.
    pub fn predict_reward(&self, g: &mut Graph, p: &Binding, z_agent: Var, h_agent: Var) -> Var {
        let x = g.concat_cols(&[z_agent, h_agent]);
        self.reward_head.forward(g, p, x)
    }

    /// `[z^a, z^g, h^a, h^g]` per agent row.
    pub fn features(&self, g: &mut Graph, s: &StateVars) -> Var {
        match (s.z_global, s.h_global) {
            (Some(zg), Some(hg)) => {
                let zg = self.to_agent_rows(g, zg);
                let hg = self.to_agent_rows(g, hg);
                g.concat_cols(&[s.z_agent, zg, s.h_agent, hg])
            }
            _ => g.concat_cols(&[s.z_agent, s.h_agent]),
        }
    }

    /// Termination logit; `sigmoid` gives ŷ.
    pub fn predict_termination(&self, g: &mut Graph, p: &Binding, features: Var) -> Var {
        self.term_head.forward(g, p, features)
    }

    /// Availability logits, one per action.
    pub fn predict_avail_actions(&self, g: &mut Graph, p: &Binding, features: Var) -> Var {
        self.avail_head.forward(g, p, features)
    }

    /// Action-decoder logits over the agent's own actions.
    pub fn decode_action(&self, g: &mut Graph, p: &Binding, features: Var) -> Var {
        self.action_decoder.forward(g, p, features)
    }

    /// Posterior encoding of one frame given the embeddings already advanced
    /// to it. Returns the new state and the posterior distributions.
    #[allow(clippy::too_many_arguments)]
    pub fn observe(
        &self,
        g: &mut Graph,
        p: &Binding,
        h_agent: Var,
        h_global: Option<Var>,
        obs: Var,
        state: Option<Var>,
        latent: LatentMode,
        rng: &mut (impl Rng + ?Sized),
    ) -> Result<(StateVars, CategoricalVars, Option<CategoricalVars>)> {
        let qa = self.posterior_agent(g, p, obs, h_agent);
        let za = latent.latent(g, &qa, rng);
        let (qg, zg) = match (h_global, state) {
            (Some(hg), Some(s)) => {
                let qg = self.posterior_global(g, p, s, za, hg)?;
                let zg = latent.latent(g, &qg, rng);
                (Some(qg), Some(zg))
            }
            (None, _) => (None, None),
            (Some(_), None) => return Err(Error::Contract("global posterior needs the state".into())),
        };
        Ok((StateVars { h_agent, h_global, z_agent: za, z_global: zg }, qa, qg))
    }

    /// Advance both embeddings with the action taken in the previous frame.
    /// `action` is one-hot `[batch * n_agents, A]`.
    pub fn advance(&self, g: &mut Graph, p: &Binding, s: &StateVars, action: &Tensor) -> Result<(Var, Option<Var>)> {
        let own = g.constant(action.clone());
        let ha = self.recurrent_step_agent(g, p, s.h_agent, s.z_agent, own)?;
        let hg = match (s.h_global, s.z_global) {
            (Some(hg), Some(zg)) => {
                let joint = g.constant(self.joint_action_rows(action));
                Some(self.recurrent_step_global(g, p, hg, zg, joint)?)
            }
            _ => None,
        };
        Ok((ha, hg))
    }

    /// Joint action of each instance, laid out on global rows.
    pub fn joint_action_rows(&self, action: &Tensor) -> Tensor {
        let n = self.config.n_agents;
        let a = self.config.action_count;
        let b = action.rows() / n;
        let joint = action.clone().reshape(vec![b, n * a]);
        match self.config.mode {
            AblationMode::Full => joint.repeat_rows(n),
            _ => joint,
        }
    }

    /// Environment state laid out on global rows.
    pub fn state_rows(&self, state: &Tensor) -> Tensor {
        match self.config.mode {
            AblationMode::Full => state.repeat_rows(self.config.n_agents),
            _ => state.clone(),
        }
    }

    /// Mask of global rows: every agent row (per-agent globals) or the
    /// first agent of each instance (shared global).
    fn global_mask(&self, mask: &Tensor) -> Tensor {
        match self.config.mode {
            AblationMode::SingleGlobal => mask.select_rows((0..mask.rows()).step_by(self.config.n_agents)),
            _ => mask.clone(),
        }
    }

    /// Unroll over `batch` and build the weighted loss on `g`.
    pub fn loss_on_graph(
        &self,
        g: &mut Graph,
        p: &Binding,
        batch: &Batch,
        rng: &mut (impl Rng + ?Sized),
        opts: &LossOptions,
    ) -> Result<LossVars> {
        let c = &self.config;
        if batch.batch == 0 || batch.length == 0 || batch.valid_entries() == 0.0 {
            return Err(Error::Contract("model_loss on an empty batch".into()));
        }
        if batch.n_agents != c.n_agents || batch.obs_dim() != c.obs_dim || batch.state_dim() != c.state_dim {
            return Err(Error::Contract("batch dimensions do not match the model".into()));
        }
        let rows = batch.rows();
        let mut acc: [Vec<Var>; 7] = Default::default();
        let mut counts = [0.0; 7];
        let mut trace = opts.trace.then(LossTrace::default);
        let mut sq_err = 0.0;

        let mut prev: Option<StateVars> = None;
        for t in 0..batch.length {
            let (ha, hg) = match &prev {
                None => {
                    let ha = g.constant(Tensor::zeros(&[rows, c.agent_hidden]));
                    let hg = c
                        .mode
                        .has_global()
                        .then(|| g.constant(Tensor::zeros(&[c.global_rows(batch.batch), c.global_hidden])));
                    (ha, hg)
                }
                Some(s) => self.advance(g, p, s, &batch.action[t - 1])?,
            };
            let obs = g.constant(batch.obs[t].clone());
            let state = hg.map(|_| g.constant(self.state_rows(&batch.state[t])));
            let (s, qa, qg) = self.observe(g, p, ha, hg, obs, state, opts.latent, rng)?;

            let mask = &batch.mask[t];
            let gmask = self.global_mask(mask);
            let mut push = |g: &mut Graph, k: usize, row_loss: Var, m: &Tensor| {
                let mv = g.constant(m.clone());
                let weighted = g.mul(row_loss, mv);
                acc[k].push(g.sum(weighted));
                counts[k] += m.sum();
            };

            // Observation reconstruction.
            let pred = self.decode_observation(g, p, s.h_agent, s.z_agent);
            let diff = g.sub(pred, obs);
            let sq = g.square(diff);
            let row = g.sum_cols(sq);
            let half = g.scale(row, 0.5);
            push(g, 0, half, mask);
            let row_sq = g.value(row);
            sq_err += row_sq.data().iter().zip(mask.data()).map(|(e, m)| e * m).sum::<f64>();

            // Agent KL against the prior conditioned on the global posterior.
            let pa = if opts.prior_equals_posterior { qa } else { self.prior_agent(g, p, s.h_agent, s.z_global) };
            let kl = kl_term(g, &qa, &pa, c.kl_alpha, opts.balanced_kl)?;
            push(g, 1, kl, mask);

            let mut pg_logits = None;
            if let (Some(qg), Some(hg)) = (qg, s.h_global) {
                let pg = if opts.prior_equals_posterior { qg } else { self.prior_global(g, p, hg)? };
                let kl = kl_term(g, &qg, &pg, c.kl_alpha, opts.balanced_kl)?;
                push(g, 2, kl, &gmask);
                pg_logits = Some(g.value(pg.logits).clone());
            }

            let r = self.predict_reward(g, p, s.z_agent, s.h_agent);
            let target = g.constant(batch.reward[t].clone());
            let diff = g.sub(r, target);
            let sq = g.square(diff);
            let half = g.scale(sq, 0.5);
            push(g, 3, half, &batch.reward_mask[t]);

            let f = self.features(g, &s);
            let y = self.predict_termination(g, p, f);
            let bce = bce_with_logits(g, y, &batch.done[t]);
            push(g, 4, bce, mask);

            let av = self.predict_avail_actions(g, p, f);
            let bce = bce_with_logits(g, av, &batch.avail[t]);
            let bce = g.sum_cols(bce);
            push(g, 5, bce, mask);

            let logits = self.decode_action(g, p, f);
            let logp = g.log_softmax_groups(logits, c.action_count);
            let taken = g.constant(batch.action[t].clone());
            let picked = g.mul(logp, taken);
            let picked = g.sum_cols(picked);
            let nll = g.neg(picked);
            push(g, 6, nll, &batch.action_mask[t]);

            if let Some(tr) = trace.as_mut() {
                tr.posterior_agent_logits.push(g.value(qa.logits).clone());
                tr.prior_agent_logits.push(g.value(pa.logits).clone());
                if let Some(qg) = qg {
                    tr.posterior_global_logits.push(g.value(qg.logits).clone());
                }
                if let Some(l) = pg_logits {
                    tr.prior_global_logits.push(l);
                }
                tr.decoded_obs.push(g.value(pred).clone());
            }
            prev = Some(s);
        }

        let w = c.weights;
        let weights = [w.recon, w.kl_agent, w.kl_global, w.reward, w.term, w.avail, w.action];
        let mut comps = [0.0; 7];
        let mut terms = Vec::with_capacity(7);
        for k in 0..7 {
            if acc[k].is_empty() || counts[k] == 0.0 {
                continue;
            }
            let mut s = acc[k][0];
            for &v in &acc[k][1..] {
                s = g.add(s, v);
            }
            let s = g.scale(s, weights[k] / counts[k]);
            comps[k] = g.value(s).item();
            terms.push(s);
        }
        let mut total = terms[0];
        for &v in &terms[1..] {
            total = g.add(total, v);
        }
        let value = g.value(total).item();
        if !value.is_finite() {
            return Err(Error::NonFinite("model loss".into()));
        }
        if let Some(tr) = trace.as_mut() {
            tr.recon_mse = sq_err / (counts[0] * c.obs_dim as f64);
        }
        let breakdown = LossBreakdown {
            recon_nll: comps[0],
            kl_agent: comps[1],
            kl_global: comps[2],
            reward_nll: comps[3],
            term_nll: comps[4],
            avail_nll: comps[5],
            action_nll: comps[6],
            total: value,
        };
        Ok(LossVars { total, breakdown, trace })
    }

    /// Loss value without gradients.
    pub fn model_loss(&self, batch: &Batch, rng: &mut (impl Rng + ?Sized), opts: &LossOptions) -> Result<(LossBreakdown, Option<LossTrace>)> {
        let mut g = Graph::new();
        let p = self.params.bind(&mut g, false);
        let out = self.loss_on_graph(&mut g, &p, batch, rng, opts)?;
        Ok((out.breakdown, out.trace))
    }

    /// Loss and its gradient with respect to every model parameter.
    pub fn loss_and_gradients(
        &self,
        batch: &Batch,
        rng: &mut (impl Rng + ?Sized),
        opts: &LossOptions,
    ) -> Result<(LossBreakdown, Vec<Option<Tensor>>)> {
        let mut g = Graph::new();
        let p = self.params.bind(&mut g, true);
        let out = self.loss_on_graph(&mut g, &p, batch, rng, opts)?;
        let mut grads = g.backward(out.total)?;
        Ok((out.breakdown, p.collect(&mut grads)))
    }
}

fn uniform_one_hot(rows: usize, k: usize, classes: usize, rng: &mut (impl Rng + ?Sized)) -> Tensor {
    let probs = vec![1.0 / classes as f64; rows * k * classes];
    Tensor::new(vec![rows, k * classes], sample_one_hot(&probs, classes, rng))
}

fn kl_term(g: &mut Graph, q: &CategoricalVars, p: &CategoricalVars, alpha: f64, balanced: bool) -> Result<Var> {
    if balanced {
        crate::numerics::kl_balanced_rows(g, q, p, alpha)
    } else {
        Ok(crate::numerics::kl_rows(g, q, p))
    }
}

fn no_global() -> Error {
    Error::Contract("model has no global level".into())
}

/// Elementwise `softplus(x) − y·x`, the Bernoulli NLL of target `y` under
/// logit `x`.
pub fn bce_with_logits(g: &mut Graph, logits: Var, target: &Tensor) -> Var {
    let y = g.constant(target.clone());
    let sp = g.softplus(logits);
    let yx = g.mul(y, logits);
    g.sub(sp, yx)
}
