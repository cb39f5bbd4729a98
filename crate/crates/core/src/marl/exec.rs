use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::actor::Actor;
use crate::error::{Error, Result};
use crate::numerics::{Graph, Tensor};
use crate::numerics::dist::argmax_one_hot;
use crate::worldmodel::{one_hot_rows, WorldModel};

/// Execution-time state of one agent. It sees only its own observation,
/// its own available actions and its own previous action.
#[derive(Clone, Debug)]
pub struct AgentRunner {
    pub agent: usize,
    h: Tensor,
    z: Tensor,
    prev_action: Option<usize>,
    rng: ChaCha8Rng,
}

impl AgentRunner {
    pub fn new(model: &WorldModel, agent: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(agent as u64 + 1);
        let c = &model.config;
        Self {
            agent,
            h: Tensor::zeros(&[1, c.agent_hidden]),
            z: Tensor::zeros(&[1, c.agent_latent()]),
            prev_action: None,
            rng,
        }
    }

    pub fn reset(&mut self) {
        self.h.data_mut().fill(0.0);
        self.z.data_mut().fill(0.0);
        self.prev_action = None;
    }

    pub fn hidden(&self) -> &Tensor {
        &self.h
    }

    /// Advance the agent embedding, encode `obs` and choose an action.
    /// Greedy acting uses the most likely latent class and action.
    pub fn step(&mut self, model: &WorldModel, actor: &Actor, obs: &[f64], avail: &[bool], greedy: bool) -> Result<usize> {
        let c = &model.config;
        if obs.len() != c.obs_dim || avail.len() != c.action_count {
            return Err(Error::Contract(format!(
                "agent {} got obs of {} and avail of {}, expected {} and {}",
                self.agent,
                obs.len(),
                avail.len(),
                c.obs_dim,
                c.action_count
            )));
        }
        let mut g = Graph::new();
        let p = model.params.bind(&mut g, false);
        let h = match self.prev_action {
            Some(a) => {
                let h = g.constant(self.h.clone());
                let z = g.constant(self.z.clone());
                let a = g.constant(one_hot_rows(&[a], c.action_count));
                model.recurrent_step_agent(&mut g, &p, h, z, a)?
            }
            None => g.constant(Tensor::zeros(&[1, c.agent_hidden])),
        };
        let o = g.constant(Tensor::new(vec![1, obs.len()], obs.to_vec()));
        let q = model.posterior_agent(&mut g, &p, o, h);
        self.h = g.value(h).clone();
        self.z = if greedy {
            let probs = g.value(q.probs);
            Tensor::new(probs.shape().to_vec(), argmax_one_hot(probs.data(), c.agent_classes))
        } else {
            let z = q.sample_st(&mut g, &mut self.rng);
            g.value(z).clone()
        };
        let av = Tensor::new(vec![1, avail.len()], avail.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect());
        let out = actor.act(&self.z, &self.h, &av, greedy, &mut self.rng);
        let a = out.actions[0];
        self.prev_action = Some(a);
        Ok(a)
    }
}

/// One independent [`AgentRunner`] per agent.
#[derive(Clone, Debug)]
pub struct DecentralizedExecutor {
    pub runners: Vec<AgentRunner>,
}

impl DecentralizedExecutor {
    pub fn new(model: &WorldModel, seed: u64) -> Self {
        Self { runners: (0..model.config.n_agents).map(|i| AgentRunner::new(model, i, seed)).collect() }
    }

    pub fn reset(&mut self) {
        self.runners.iter_mut().for_each(AgentRunner::reset);
    }

    pub fn act(
        &mut self,
        model: &WorldModel,
        actor: &Actor,
        observations: &[Vec<f64>],
        avail: &[Vec<bool>],
        greedy: bool,
    ) -> Result<Vec<usize>> {
        self.runners
            .iter_mut()
            .zip(observations.iter().zip(avail))
            .map(|(r, (o, a))| r.step(model, actor, o, a, greedy))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::{make_env, MarkovGame};
    use crate::numerics::Activation;
    use crate::worldmodel::ModelConfig;

    fn setup() -> (WorldModel, Actor, Box<dyn MarkovGame>) {
        let env = make_env("corridor_meet").unwrap();
        let mut cfg = ModelConfig::for_env(env.as_ref());
        cfg.agent_hidden = 8;
        cfg.global_hidden = 8;
        cfg.mlp_width = 16;
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let model = WorldModel::new(cfg.clone(), &mut rng).unwrap();
        let actor = Actor::new(cfg.agent_latent() + cfg.agent_hidden, cfg.action_count, 16, 2, Activation::Relu, &mut rng);
        (model, actor, env)
    }

    #[test]
    fn other_agents_inputs_do_not_change_an_agents_actions() {
        let (model, actor, mut env) = setup();
        let frame = env.reset(5);
        let mut base = DecentralizedExecutor::new(&model, 9);
        let mut pert = DecentralizedExecutor::new(&model, 9);
        let mut obs = frame.observations.clone();
        let mut avail = frame.avail_actions.clone();
        for t in 0..10 {
            let a = base.act(&model, &actor, &obs, &avail, false).unwrap();
            let mut other = obs.clone();
            other[1] = other[1].iter().map(|v| v + 0.37 * (t as f64 + 1.0)).collect();
            let mut other_avail = avail.clone();
            other_avail[1] = vec![false, true, false];
            let b = pert.act(&model, &actor, &other, &other_avail, false).unwrap();
            assert_eq!(a[0], b[0]);
            assert_eq!(base.runners[0].hidden(), pert.runners[0].hidden());
            assert_eq!(b[1], 1);
            env.step(&a).unwrap();
            if env.is_done() {
                break;
            }
            let f = env.frame();
            obs = f.observations;
            avail = f.avail_actions;
        }
    }

    #[test]
    fn reset_restores_the_initial_embedding() {
        let (model, actor, mut env) = setup();
        let frame = env.reset(0);
        let mut ex = DecentralizedExecutor::new(&model, 0);
        ex.act(&model, &actor, &frame.observations, &frame.avail_actions, true).unwrap();
        ex.act(&model, &actor, &frame.observations, &frame.avail_actions, true).unwrap();
        assert!(ex.runners[0].hidden().data().iter().any(|&v| v != 0.0));
        ex.reset();
        assert!(ex.runners[0].hidden().data().iter().all(|&v| v == 0.0));
    }
}
