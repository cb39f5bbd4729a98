use super::actor::Actor;
use super::critic::Critic;
use super::gae::normalize_advantages;
use crate::error::{Error, Result};
use crate::numerics::{clip_grad_norm, Adam, Graph, Tensor, Var};
use crate::worldmodel::one_hot_rows;

/// Flattened training rows. Consecutive groups of `n_agents` rows belong to
/// the same environment instance and time step (the critic attends within
/// such groups).
#[derive(Clone, Debug)]
pub struct PpoBatch {
    pub actor_inputs: Tensor,
    pub critic_inputs: Tensor,
    pub avail: Tensor,
    pub actions: Vec<usize>,
    pub old_log_probs: Vec<f64>,
    pub advantages: Vec<f64>,
    pub value_targets: Vec<f64>,
    /// Probability that the imagined episode is still running.
    pub weights: Vec<f64>,
}

impl PpoBatch {
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PpoConfig {
    pub epochs: usize,
    pub clip_eps: f64,
    pub entropy_coef: f64,
    pub value_coef: f64,
    pub max_grad_norm: f64,
    pub normalize_advantages: bool,
}

impl Default for PpoConfig {
    fn default() -> Self {
        Self {
            epochs: 5,
            clip_eps: 0.2,
            entropy_coef: 0.001,
            value_coef: 0.5,
            max_grad_norm: 100.0,
            normalize_advantages: true,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct PpoStats {
    pub mean_ratio: f64,
    pub clip_fraction: f64,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
}

/// `min(r·A, clip(r, 1−ε, 1+ε)·A)` per row, with `r = exp(logp − old)`.
pub fn clipped_surrogate(g: &mut Graph, logp: Var, old_log_probs: &[f64], advantages: &[f64], clip_eps: f64) -> (Var, Var) {
    let n = old_log_probs.len();
    let old = g.constant(Tensor::new(vec![n, 1], old_log_probs.to_vec()));
    let adv = g.constant(Tensor::new(vec![n, 1], advantages.to_vec()));
    let diff = g.sub(logp, old);
    let ratio = g.exp(diff);
    let s1 = g.mul(ratio, adv);
    let clipped = g.clamp(ratio, 1.0 - clip_eps, 1.0 + clip_eps);
    let s2 = g.mul(clipped, adv);
    (g.minimum(s1, s2), ratio)
}

/// Mean ratio and clip fraction of the current actor against the batch's
/// old log-probabilities.
pub fn ratio_stats(actor: &Actor, batch: &PpoBatch, clip_eps: f64) -> (f64, f64) {
    let mut g = Graph::new();
    let p = actor.params.bind(&mut g, false);
    let x = g.constant(batch.actor_inputs.clone());
    let lp = actor.log_probs(&mut g, &p, x, &batch.avail);
    let picked = one_hot_rows(&batch.actions, actor.action_count);
    let lp = g.value(lp);
    let n = batch.len() as f64;
    let (mut sum, mut clipped) = (0.0, 0.0);
    for (r, &old) in batch.old_log_probs.iter().enumerate() {
        let logp: f64 = lp.row(r).iter().zip(picked.row(r)).map(|(a, b)| if *b == 1.0 { *a } else { 0.0 }).sum();
        let ratio = (logp - old).exp();
        sum += ratio;
        if (ratio - 1.0).abs() > clip_eps {
            clipped += 1.0;
        }
    }
    (sum / n, clipped / n)
}

fn weighted_mean(g: &mut Graph, rows: Var, w: &Var, wsum: f64) -> Var {
    let x = g.mul(rows, *w);
    let s = g.sum(x);
    g.scale(s, 1.0 / wsum)
}

/// Several full-batch epochs of the clipped objective for the actor and the
/// squared-error value loss for the critic.
pub fn ppo_update(
    actor: &mut Actor,
    critic: &mut Critic,
    actor_opt: &mut Adam,
    critic_opt: &mut Adam,
    batch: &PpoBatch,
    cfg: &PpoConfig,
) -> Result<PpoStats> {
    if batch.is_empty() {
        return Err(Error::Contract("ppo_update on an empty batch".into()));
    }
    if batch.advantages.iter().any(|a| !a.is_finite()) {
        return Err(Error::NonFinite("advantages".into()));
    }
    let mut adv = batch.advantages.clone();
    if cfg.normalize_advantages {
        normalize_advantages(&mut adv);
    }
    let n = batch.len();
    let wsum: f64 = batch.weights.iter().sum::<f64>().max(1e-8);
    let taken = one_hot_rows(&batch.actions, actor.action_count);
    let mut stats = PpoStats::default();
    for _ in 0..cfg.epochs {
        let mut g = Graph::new();
        let pa = actor.params.bind(&mut g, true);
        let pc = critic.params.bind(&mut g, true);
        let w = g.constant(Tensor::new(vec![n, 1], batch.weights.clone()));

        let x = g.constant(batch.actor_inputs.clone());
        let lp_all = actor.log_probs(&mut g, &pa, x, &batch.avail);
        let onehot = g.constant(taken.clone());
        let lp = g.mul(lp_all, onehot);
        let lp = g.sum_cols(lp);
        let (surr, ratio) = clipped_surrogate(&mut g, lp, &batch.old_log_probs, &adv, cfg.clip_eps);
        let surr = weighted_mean(&mut g, surr, &w, wsum);
        let policy_loss = g.neg(surr);

        let probs = g.exp(lp_all);
        let plogp = g.mul(probs, lp_all);
        let plogp = g.sum_cols(plogp);
        let ent_rows = g.neg(plogp);
        let entropy = weighted_mean(&mut g, ent_rows, &w, wsum);

        let cx = g.constant(batch.critic_inputs.clone());
        let v = critic.forward(&mut g, &pc, cx);
        let target = g.constant(Tensor::new(vec![n, 1], batch.value_targets.clone()));
        let diff = g.sub(v, target);
        let sq = g.square(diff);
        let half = g.scale(sq, 0.5);
        let value_loss = weighted_mean(&mut g, half, &w, wsum);

        let ent_term = g.scale(entropy, -cfg.entropy_coef);
        let val_term = g.scale(value_loss, cfg.value_coef);
        let total = g.add(policy_loss, ent_term);
        let total = g.add(total, val_term);
        let loss = g.value(total).item();
        if !loss.is_finite() {
            return Err(Error::NonFinite(format!(
                "ppo loss (policy {}, value {}, entropy {})",
                g.value(policy_loss).item(),
                g.value(value_loss).item(),
                g.value(entropy).item()
            )));
        }

        let ratios = g.value(ratio).data();
        stats.mean_ratio += ratios.iter().sum::<f64>() / n as f64;
        stats.clip_fraction += ratios.iter().filter(|r| (*r - 1.0).abs() > cfg.clip_eps).count() as f64 / n as f64;
        stats.policy_loss += g.value(policy_loss).item();
        stats.value_loss += g.value(value_loss).item();
        stats.entropy += g.value(entropy).item();

        let mut grads = g.backward(total)?;
        let mut ga = pa.collect(&mut grads);
        let mut gc = pc.collect(&mut grads);
        clip_grad_norm(&mut ga, cfg.max_grad_norm);
        clip_grad_norm(&mut gc, cfg.max_grad_norm);
        actor_opt.step(&mut actor.params, &ga)?;
        critic_opt.step(&mut critic.params, &gc)?;
    }
    let e = cfg.epochs.max(1) as f64;
    stats.mean_ratio /= e;
    stats.clip_fraction /= e;
    stats.policy_loss /= e;
    stats.value_loss /= e;
    stats.entropy /= e;
    Ok(stats)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Activation;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn unchanged_parameters_give_unit_ratio() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let actor = Actor::new(3, 2, 8, 2, Activation::Relu, &mut rng);
        let x = crate::numerics::gradcheck::random_tensor(&mut rng, &[6, 3], 1.0);
        let avail = Tensor::full(&[6, 2], 1.0);
        let out = actor.act_on(&x, &avail, false, &mut rng);
        let batch = PpoBatch {
            actor_inputs: x.clone(),
            critic_inputs: x.clone(),
            avail,
            actions: out.actions,
            old_log_probs: out.log_probs,
            advantages: vec![1.0; 6],
            value_targets: vec![0.0; 6],
            weights: vec![1.0; 6],
        };
        let (ratio, clip) = ratio_stats(&actor, &batch, 0.2);
        assert!((ratio - 1.0).abs() < 1e-12);
        assert_eq!(clip, 0.0);
    }

    #[test]
    fn saturated_clip_blocks_the_gradient() {
        let mut g = Graph::new();
        // Row 0: ratio e^0.5 > 1.2 with positive advantage (clipped).
        // Row 1: ratio 1 (unclipped).
        let logp = g.parameter(Tensor::new(vec![2, 1], vec![0.5, 0.0]));
        let (surr, _) = clipped_surrogate(&mut g, logp, &[0.0, 0.0], &[1.0, 1.0], 0.2);
        let s = g.sum(surr);
        let grads = g.backward(s).unwrap();
        let d = grads.get(logp).unwrap().data();
        assert_eq!(d[0], 0.0);
        assert!((d[1] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn bandit_converges_to_the_better_arm() {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut actor = Actor::new(1, 2, 16, 2, Activation::Relu, &mut rng);
        let mut critic = Critic::new(1, 1, 16, 2, Activation::Relu, &mut rng);
        let mut ao = Adam::new(&actor.params, 3e-3);
        let mut co = Adam::new(&critic.params, 3e-3);
        let x = Tensor::full(&[64, 1], 1.0);
        let avail = Tensor::full(&[64, 2], 1.0);
        let cfg = PpoConfig::default();
        for _ in 0..50 {
            let out = actor.act_on(&x, &avail, false, &mut rng);
            let rewards: Vec<f64> = out.actions.iter().map(|&a| if a == 1 { 1.0 } else { 0.0 } + rng.gen_range(-0.1..0.1)).collect();
            let values = critic.values(&x);
            let batch = PpoBatch {
                actor_inputs: x.clone(),
                critic_inputs: x.clone(),
                avail: avail.clone(),
                actions: out.actions,
                old_log_probs: out.log_probs,
                advantages: rewards.iter().zip(&values).map(|(r, v)| r - v).collect(),
                value_targets: rewards,
                weights: vec![1.0; 64],
            };
            ppo_update(&mut actor, &mut critic, &mut ao, &mut co, &batch, &cfg).unwrap();
        }
        let p = actor.probs_on(&Tensor::full(&[1, 1], 1.0), &Tensor::full(&[1, 2], 1.0));
        assert!(p.data()[1] > 0.9, "{:?}", p.data());
    }
}
