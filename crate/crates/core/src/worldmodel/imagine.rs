use rand::{Rng, RngCore};

use super::model::{BiLevelState, LatentMode, StateVars, WorldModel};
use crate::envs::Batch;
use crate::error::{Error, Result};
use crate::numerics::{Graph, Tensor};

/// Actions chosen by a policy for every agent row.
#[derive(Clone, Debug, PartialEq)]
pub struct ActOutput {
    pub actions: Vec<usize>,
    pub log_probs: Vec<f64>,
}

/// Anything that maps an agent's latent and embedding to an action.
pub trait Policy {
    /// `z_agent` and `h_agent` have one row per agent; `avail` is 0/1 with
    /// at least one available action per row.
    fn act(&mut self, z_agent: &Tensor, h_agent: &Tensor, avail: &Tensor, rng: &mut dyn RngCore) -> Result<ActOutput>;
}

/// Always the same action.
#[derive(Clone, Copy, Debug)]
pub struct FixedPolicy(pub usize);

impl Policy for FixedPolicy {
    fn act(&mut self, z_agent: &Tensor, _: &Tensor, _: &Tensor, _: &mut dyn RngCore) -> Result<ActOutput> {
        let n = z_agent.rows();
        Ok(ActOutput { actions: vec![self.0; n], log_probs: vec![0.0; n] })
    }
}

/// One imagined step for every start row.
#[derive(Clone, Debug)]
pub struct ImaginedStep {
    pub state: BiLevelState,
    /// Reward predicted on entering this step, `[rows, 1]`.
    pub reward: Tensor,
    /// Termination probability ŷ on entering this step, `[rows, 1]`.
    pub term_prob: Tensor,
    pub avail_prob: Tensor,
    /// Thresholded availability used for acting.
    pub avail_mask: Tensor,
    /// Policy output; absent on the final step.
    pub act: Option<ActOutput>,
}

/// Latent rollouts of `horizon` steps from a set of start states.
#[derive(Clone, Debug)]
pub struct LatentTrajectory {
    pub steps: Vec<ImaginedStep>,
}

impl LatentTrajectory {
    pub fn horizon(&self) -> usize {
        self.steps.len()
    }

    /// Agent rows per step.
    pub fn rows(&self) -> usize {
        self.steps[0].state.h_agent.rows()
    }

    /// `1 − ŷ` on entering step `k`.
    pub fn continuation(&self, k: usize) -> Vec<f64> {
        self.steps[k].term_prob.data().iter().map(|y| 1.0 - y).collect()
    }

    /// Probability of still running at step `k`: the product of
    /// continuations of steps `1..=k`.
    pub fn weight(&self, k: usize) -> Vec<f64> {
        let mut w = vec![1.0; self.rows()];
        for j in 1..=k {
            for (wi, c) in w.iter_mut().zip(self.continuation(j)) {
                *wi *= c;
            }
        }
        w
    }
}

/// Threshold at 0.5; a row with nothing available falls back to all ones.
pub fn threshold_avail(probs: &Tensor) -> Tensor {
    let a = probs.cols();
    let mut out = probs.map(|p| if p > 0.5 { 1.0 } else { 0.0 });
    for row in out.data_mut().chunks_mut(a) {
        if row.iter().all(|&v| v == 0.0) {
            row.fill(1.0);
        }
    }
    out
}

pub fn one_hot_rows(actions: &[usize], classes: usize) -> Tensor {
    let mut t = Tensor::zeros(&[actions.len(), classes]);
    for (r, &a) in actions.iter().enumerate() {
        t.data_mut()[r * classes + a] = 1.0;
    }
    t
}

impl WorldModel {
    /// Posterior states at every usable frame of `batch`: valid frames on
    /// which the episode had not terminated. Instances become the batch of
    /// the returned state.
    pub fn encode_starts(&self, batch: &Batch, rng: &mut (impl Rng + ?Sized)) -> Result<BiLevelState> {
        let c = &self.config;
        let n = c.n_agents;
        let mut g = Graph::new();
        let p = self.params.bind(&mut g, false);
        let rows = batch.rows();
        let mut prev: Option<StateVars> = None;
        let mut picked: Vec<(usize, BiLevelState)> = Vec::new();
        for t in 0..batch.length {
            let (ha, hg) = match &prev {
                None => (
                    g.constant(Tensor::zeros(&[rows, c.agent_hidden])),
                    c.mode
                        .has_global()
                        .then(|| g.constant(Tensor::zeros(&[c.global_rows(batch.batch), c.global_hidden]))),
                ),
                Some(s) => self.advance(&mut g, &p, s, &batch.action[t - 1])?,
            };
            let obs = g.constant(batch.obs[t].clone());
            let state = hg.map(|_| g.constant(self.state_rows(&batch.state[t])));
            let (s, _, _) = self.observe(&mut g, &p, ha, hg, obs, state, LatentMode::Sample, rng)?;
            let values = s.values(&g, batch.batch, true);
            for b in 0..batch.batch {
                if batch.mask[t].data()[b * n] == 1.0 && batch.done[t].data()[b * n] == 0.0 {
                    picked.push((b, values.clone()));
                }
            }
            prev = Some(s);
        }
        if picked.is_empty() {
            return Err(Error::Contract("no usable start frames in batch".into()));
        }
        let agent_rows = |b: usize| b * n..(b + 1) * n;
        let global_rows = |b: usize| match c.mode {
            super::AblationMode::SingleGlobal => b..b + 1,
            _ => b * n..(b + 1) * n,
        };
        let gather = |f: &dyn Fn(&BiLevelState) -> Option<&Tensor>, rows: &dyn Fn(usize) -> std::ops::Range<usize>| {
            let parts: Option<Vec<Tensor>> =
                picked.iter().map(|(b, s)| f(s).map(|t| t.select_rows(rows(*b)))).collect();
            parts.map(|p| Tensor::concat_rows(&p))
        };
        Ok(BiLevelState {
            batch: picked.len(),
            h_agent: gather(&|s| Some(&s.h_agent), &agent_rows).expect("agent rows"),
            h_global: gather(&|s| s.h_global.as_ref(), &global_rows),
            z_agent: gather(&|s| Some(&s.z_agent), &agent_rows).expect("agent rows"),
            z_global: gather(&|s| s.z_global.as_ref(), &global_rows),
            posterior: true,
        })
    }

    /// Roll the prior forward for `horizon` steps under `policy`. Never
    /// touches an environment or real observations.
    pub fn imagine(
        &self,
        start: &BiLevelState,
        policy: &mut dyn Policy,
        horizon: usize,
        rng: &mut impl Rng,
    ) -> Result<LatentTrajectory> {
        if horizon < 1 {
            return Err(Error::Contract("imagination horizon must be at least 1".into()));
        }
        let a = self.config.action_count;
        let mut g = Graph::new();
        let p = self.params.bind(&mut g, false);
        let base = g.len();
        let mut state = start.clone();
        let mut steps = Vec::with_capacity(horizon);
        for k in 0..horizon {
            g.truncate(base);
            let sv = StateVars::constants(&mut g, &state);
            let r = self.predict_reward(&mut g, &p, sv.z_agent, sv.h_agent);
            let f = self.features(&mut g, &sv);
            let y = self.predict_termination(&mut g, &p, f);
            let y = g.sigmoid(y);
            let av = self.predict_avail_actions(&mut g, &p, f);
            let av = g.sigmoid(av);
            let avail_prob = g.value(av).clone();
            let avail_mask = threshold_avail(&avail_prob);
            let mut step = ImaginedStep {
                state: state.clone(),
                reward: g.value(r).clone(),
                term_prob: g.value(y).clone(),
                avail_prob,
                avail_mask,
                act: None,
            };
            if k + 1 < horizon {
                let act = policy.act(&state.z_agent, &state.h_agent, &step.avail_mask, rng)?;
                let onehot = one_hot_rows(&act.actions, a);
                let (ha, hg) = self.advance(&mut g, &p, &sv, &onehot)?;
                let zg = match hg {
                    Some(hg) => {
                        let pg = self.prior_global(&mut g, &p, hg)?;
                        Some(pg.sample_st(&mut g, rng))
                    }
                    None => None,
                };
                let pa = self.prior_agent(&mut g, &p, ha, zg);
                let za = pa.sample_st(&mut g, rng);
                let next = StateVars { h_agent: ha, h_global: hg, z_agent: za, z_global: zg };
                state = next.values(&g, start.batch, false);
                step.act = Some(act);
            }
            steps.push(step);
        }
        Ok(LatentTrajectory { steps })
    }
}
