use super::critic::Critic;
use super::gae::gae;
use super::ppo::PpoBatch;
use crate::error::{Error, Result};
use crate::numerics::{Graph, Tensor};
use crate::worldmodel::{BiLevelState, LatentTrajectory, StateVars, WorldModel};

/// Critic inputs for every agent row of `state`: the model features, or the
/// global half of them when `global_only` is set.
pub fn critic_features(model: &WorldModel, state: &BiLevelState, global_only: bool) -> Tensor {
    let mut g = Graph::new();
    let sv = StateVars::constants(&mut g, state);
    if global_only {
        if let (Some(zg), Some(hg)) = (sv.z_global, sv.h_global) {
            let zg = model.to_agent_rows(&mut g, zg);
            let hg = model.to_agent_rows(&mut g, hg);
            let x = g.concat_cols(&[zg, hg]);
            return g.value(x).clone();
        }
    }
    let f = model.features(&mut g, &sv);
    g.value(f).clone()
}

pub fn critic_input_dim(model: &WorldModel, global_only: bool) -> usize {
    let c = &model.config;
    if global_only && c.mode.has_global() {
        c.global_latent() + c.global_hidden_dim()
    } else {
        c.feature_dim()
    }
}

pub fn actor_features(state: &BiLevelState) -> Tensor {
    Tensor::concat_cols(&[&state.z_agent, &state.h_agent])
}

/// Returns and advantages over an imagined trajectory, flattened into PPO
/// rows. The action at step `k` earns the reward predicted on entering
/// step `k + 1`; the last step only bootstraps.
pub fn imagined_batch(
    model: &WorldModel,
    critic: &Critic,
    traj: &LatentTrajectory,
    gamma: f64,
    lambda: f64,
    global_only: bool,
) -> Result<PpoBatch> {
    let h = traj.horizon();
    if h < 2 {
        return Err(Error::Contract("imagined trajectory needs at least two steps".into()));
    }
    let rows = traj.rows();
    let critic_in: Vec<Tensor> = traj.steps.iter().map(|s| critic_features(model, &s.state, global_only)).collect();
    let values: Vec<Vec<f64>> = critic_in.iter().map(|x| critic.values(x)).collect();

    let mut adv = vec![vec![0.0; h - 1]; rows];
    let mut targets = vec![vec![0.0; h - 1]; rows];
    for r in 0..rows {
        let rew: Vec<f64> = (1..h).map(|k| traj.steps[k].reward.data()[r]).collect();
        let cont: Vec<f64> = (1..h).map(|k| 1.0 - traj.steps[k].term_prob.data()[r]).collect();
        let v: Vec<f64> = values.iter().map(|v| v[r]).collect();
        let (a, t) = gae(&rew, &v, &cont, gamma, lambda)?;
        adv[r] = a;
        targets[r] = t;
    }

    let steps = &traj.steps[..h - 1];
    let mut actions = Vec::with_capacity(rows * (h - 1));
    let mut old_log_probs = Vec::with_capacity(rows * (h - 1));
    let mut advantages = Vec::with_capacity(rows * (h - 1));
    let mut value_targets = Vec::with_capacity(rows * (h - 1));
    let mut weights = Vec::with_capacity(rows * (h - 1));
    for (k, step) in steps.iter().enumerate() {
        let act = step.act.as_ref().ok_or_else(|| Error::Contract(format!("imagined step {k} has no action")))?;
        actions.extend_from_slice(&act.actions);
        old_log_probs.extend_from_slice(&act.log_probs);
        advantages.extend((0..rows).map(|r| adv[r][k]));
        value_targets.extend((0..rows).map(|r| targets[r][k]));
        weights.extend(traj.weight(k));
    }
    Ok(PpoBatch {
        actor_inputs: Tensor::concat_rows(&steps.iter().map(|s| actor_features(&s.state)).collect::<Vec<_>>()),
        critic_inputs: Tensor::concat_rows(&critic_in[..h - 1]),
        avail: Tensor::concat_rows(&steps.iter().map(|s| s.avail_mask.clone()).collect::<Vec<_>>()),
        actions,
        old_log_probs,
        advantages,
        value_targets,
        weights,
    })
}
