//! The outer training loop: real-environment collection, world-model
//! training, policy learning in imagination, evaluation and logging.

mod config;
mod metrics;

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

pub use config::RunConfig;
pub use metrics::{MetricsRow, MetricsWriter, METRICS_COLUMNS, METRICS_VERSION_TAG};

use crate::envs::{Episode, MarkovGame, ModelBuffer};
use crate::error::{Error, Result};
use crate::marl::{critic_input_dim, imagined_batch, ppo_update, Actor, Critic, DecentralizedExecutor, PpoStats};
use crate::numerics::{clip_grad_norm, Adam};
use crate::worldmodel::{AblationMode, Checkpoint, LossBreakdown, LossOptions, WorldModel};

/// Environment seeds used by every evaluation, so runs and modes are scored
/// on the same episodes.
pub const EVAL_SEED_BASE: u64 = 0x00E7_A100_0000;

const STREAM_INIT: u64 = 0;
const STREAM_COLLECT: u64 = 1;
const STREAM_MODEL: u64 = 2;
const STREAM_POLICY: u64 = 3;

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// Outcome of [`Trainer::collect_episode`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CollectStats {
    pub steps: usize,
    pub total_reward: f64,
}

/// Model, policy, optimizers, buffer and environments of one run.
pub struct Trainer {
    pub config: RunConfig,
    pub env: Box<dyn MarkovGame>,
    pub eval_env: Box<dyn MarkovGame>,
    pub model: WorldModel,
    pub actor: Actor,
    pub critic: Critic,
    pub buffer: ModelBuffer,
    pub entropy_coef: f64,
    model_opt: Adam,
    actor_opt: Adam,
    critic_opt: Adam,
    collect_rng: ChaCha8Rng,
    model_rng: ChaCha8Rng,
    policy_rng: ChaCha8Rng,
    env_steps: usize,
    episodes: usize,
    start_windows: usize,
}

impl Trainer {
    pub fn new(config: RunConfig) -> Result<Self> {
        config.validate()?;
        let env = config.make_env()?;
        let eval_env = config.make_env()?;
        let model_cfg = config.model_config(env.as_ref());
        let mut init = stream(config.seed, STREAM_INIT);
        let model = WorldModel::new(model_cfg.clone(), &mut init)?;
        let actor_in = model_cfg.agent_latent() + model_cfg.agent_hidden;
        let actor = Actor::new(actor_in, model_cfg.action_count, config.policy_width, config.policy_depth, config.activation, &mut init);
        let critic = Critic::new(
            critic_input_dim(&model, config.critic_global_only),
            model_cfg.n_agents,
            config.policy_width,
            config.policy_depth,
            config.activation,
            &mut init,
        );
        Ok(Self {
            model_opt: Adam::new(&model.params, config.model_lr),
            actor_opt: Adam::new(&actor.params, config.actor_lr),
            critic_opt: Adam::new(&critic.params, config.critic_lr),
            collect_rng: stream(config.seed, STREAM_COLLECT),
            model_rng: stream(config.seed, STREAM_MODEL),
            policy_rng: stream(config.seed, STREAM_POLICY),
            buffer: ModelBuffer::new(config.buffer_capacity),
            entropy_coef: config.entropy_coef,
            env_steps: 0,
            episodes: 0,
            start_windows: 0,
            env,
            eval_env,
            model,
            actor,
            critic,
            config,
        })
    }

    /// Real environment steps collected so far.
    pub fn env_steps(&self) -> usize {
        self.env_steps
    }

    pub fn episodes(&self) -> usize {
        self.episodes
    }

    /// Buffer windows drawn as imagination starts so far.
    pub fn start_windows(&self) -> usize {
        self.start_windows
    }

    /// Play one episode with the current actor through the decentralized
    /// path and store it.
    pub fn collect_episode(&mut self) -> Result<CollectStats> {
        let env_seed: u64 = self.collect_rng.gen();
        let exec_seed: u64 = self.collect_rng.gen();
        let ep = play_episode(self.env.as_mut(), &self.model, &self.actor, env_seed, exec_seed, false)?;
        let stats = CollectStats { steps: ep.len(), total_reward: ep.total_reward() };
        self.env_steps += ep.len();
        self.episodes += 1;
        self.buffer.append(ep);
        Ok(stats)
    }

    /// `steps` optimizer steps of the model loss on uniformly drawn windows.
    pub fn train_model_phase(&mut self, steps: usize) -> Result<Vec<LossBreakdown>> {
        let mut history = Vec::with_capacity(steps);
        for _ in 0..steps {
            let batch = self.buffer.sample(self.config.model_batch, self.config.window, &mut self.model_rng)?;
            let (loss, mut grads) = self.model.loss_and_gradients(&batch, &mut self.model_rng, &LossOptions::default())?;
            if !loss.total.is_finite() {
                return Err(Error::NonFinite(format!("model loss {loss:?}")));
            }
            clip_grad_norm(&mut grads, self.config.grad_clip);
            self.model_opt.step(&mut self.model.params, &grads)?;
            history.push(loss);
        }
        Ok(history)
    }

    /// `rounds` of imagine, advantage estimation and policy update, each
    /// starting from `policy_batch` fresh windows and imagining `horizon`
    /// transitions. The model is read only.
    pub fn train_policy_phase(&mut self, rounds: usize) -> Result<Vec<PpoStats>> {
        let c = &self.config;
        let mut history = Vec::with_capacity(rounds);
        for _ in 0..rounds {
            let batch = self.buffer.sample(c.policy_batch, c.window, &mut self.policy_rng)?;
            self.start_windows += batch.batch;
            let start = self.model.encode_starts(&batch, &mut self.policy_rng)?;
            let traj = self.model.imagine(&start, &mut self.actor, c.horizon + 1, &mut self.policy_rng)?;
            let pb = imagined_batch(&self.model, &self.critic, &traj, c.gamma, c.gae_lambda, c.critic_global_only)?;
            let stats = ppo_update(
                &mut self.actor,
                &mut self.critic,
                &mut self.actor_opt,
                &mut self.critic_opt,
                &pb,
                &c.ppo_config(self.entropy_coef),
            )?;
            self.entropy_coef *= c.entropy_anneal;
            history.push(stats);
        }
        Ok(history)
    }

    /// Mean return of `episodes` greedy episodes on the fixed evaluation
    /// seeds.
    pub fn evaluate(&mut self, episodes: usize) -> Result<f64> {
        let mut total = 0.0;
        for j in 0..episodes {
            let seed = EVAL_SEED_BASE + j as u64;
            let ep = play_episode(self.eval_env.as_mut(), &self.model, &self.actor, seed, seed, true)?;
            total += ep.total_reward();
        }
        Ok(total / episodes.max(1) as f64)
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint::from_stores(
            self.model.config.fingerprint(),
            &[("model", &self.model.params), ("actor", &self.actor.params), ("critic", &self.critic.params)],
        )
    }

    /// Load parameters saved by [`Trainer::checkpoint`] under the same
    /// configuration.
    pub fn restore(&mut self, ckpt: &Checkpoint) -> Result<()> {
        if ckpt.fingerprint != self.model.config.fingerprint() {
            return Err(Error::Format("checkpoint was written for a different model configuration".into()));
        }
        ckpt.restore("model", &mut self.model.params)?;
        ckpt.restore("actor", &mut self.actor.params)?;
        ckpt.restore("critic", &mut self.critic.params)
    }

    /// One outer round: collect, train the model and (after warmup) the
    /// policy. Fails if a phase wrote parameters it does not own.
    pub fn iteration(&mut self) -> Result<(f64, Vec<LossBreakdown>, Vec<PpoStats>)> {
        let mut reward = 0.0;
        let per = self.config.episodes_per_iter;
        for _ in 0..per {
            reward += self.collect_episode()?.total_reward;
        }
        let policy_sums = (self.actor.params.checksum(), self.critic.params.checksum());
        let losses = self.train_model_phase(self.config.model_steps)?;
        if policy_sums != (self.actor.params.checksum(), self.critic.params.checksum()) {
            return Err(Error::Contract("model phase changed policy parameters".into()));
        }
        let mut stats = Vec::new();
        if self.episodes > self.config.warmup {
            let model_sum = self.model.params.checksum();
            let calls = self.env.calls();
            stats = self.train_policy_phase(self.config.policy_steps)?;
            if model_sum != self.model.params.checksum() {
                return Err(Error::Contract("policy phase changed model parameters".into()));
            }
            if calls != self.env.calls() {
                return Err(Error::Contract("policy phase touched the environment".into()));
            }
        }
        Ok((reward / per as f64, losses, stats))
    }
}

/// Play one episode with per-agent runners and record it.
pub fn play_episode(
    env: &mut dyn MarkovGame,
    model: &WorldModel,
    actor: &Actor,
    env_seed: u64,
    exec_seed: u64,
    greedy: bool,
) -> Result<Episode> {
    let mut exec = DecentralizedExecutor::new(model, exec_seed);
    let mut frame = env.reset(env_seed);
    let mut steps = Vec::new();
    while !env.is_done() {
        let action = exec.act(model, actor, &frame.observations, &frame.avail_actions, greedy)?;
        steps.push(env.step(&action)?);
        frame = env.frame();
    }
    Ok(Episode { steps, last: frame })
}

fn mean_loss(history: &[LossBreakdown]) -> Option<LossBreakdown> {
    if history.is_empty() {
        return None;
    }
    let n = history.len() as f64;
    let mut m = LossBreakdown::default();
    for l in history {
        m.recon_nll += l.recon_nll / n;
        m.kl_agent += l.kl_agent / n;
        m.kl_global += l.kl_global / n;
        m.reward_nll += l.reward_nll / n;
        m.term_nll += l.term_nll / n;
        m.avail_nll += l.avail_nll / n;
        m.action_nll += l.action_nll / n;
        m.total += l.total / n;
    }
    Some(m)
}

fn mean_stats(history: &[PpoStats]) -> Option<PpoStats> {
    if history.is_empty() {
        return None;
    }
    let n = history.len() as f64;
    Some(history.iter().fold(PpoStats::default(), |mut m, s| {
        m.mean_ratio += s.mean_ratio / n;
        m.clip_fraction += s.clip_fraction / n;
        m.policy_loss += s.policy_loss / n;
        m.value_loss += s.value_loss / n;
        m.entropy += s.entropy / n;
        m
    }))
}

/// Summary of a finished run.
#[derive(Clone, Debug, PartialEq)]
pub struct RunSummary {
    pub mode: AblationMode,
    pub seed: u64,
    pub episodes: usize,
    pub env_steps: usize,
    pub final_eval: f64,
    /// `(env steps, evaluation return)` of every evaluation.
    pub evals: Vec<(usize, f64)>,
}

/// Train until the episode or step budget is spent, evaluating and logging
/// along the way. With `out`, writes `metrics.csv`, `log.jsonl` and
/// `checkpoint.bin` there.
pub fn run(config: &RunConfig, out: Option<&Path>) -> Result<RunSummary> {
    let mut t = Trainer::new(config.clone())?;
    let mut writer = out.map(MetricsWriter::create).transpose()?;
    if let Some(w) = writer.as_mut() {
        w.event("start", json!({ "config": config.to_kv_text() }))?;
    }
    let mut evals = Vec::new();
    let mut iteration = 0;
    let budget_left = |t: &Trainer| {
        t.episodes() < config.episodes && (config.max_env_steps == 0 || t.env_steps() < config.max_env_steps)
    };
    while budget_left(&t) {
        iteration += 1;
        let (train_return, losses, stats) = t.iteration()?;
        let last = !budget_left(&t);
        let eval_return = if last || (config.eval_every > 0 && iteration % config.eval_every == 0) {
            let r = t.evaluate(config.eval_episodes)?;
            evals.push((t.env_steps(), r));
            Some(r)
        } else {
            None
        };
        let row = MetricsRow {
            iteration,
            episodes: t.episodes(),
            env_steps: t.env_steps(),
            train_return,
            eval_return,
            loss: mean_loss(&losses),
            ppo: mean_stats(&stats),
            entropy_coef: t.entropy_coef,
        };
        if let (Some(w), Some(dir)) = (writer.as_mut(), out) {
            w.write(&row)?;
            if config.checkpoint_every > 0 && iteration % config.checkpoint_every == 0 {
                t.checkpoint().save(dir.join(format!("checkpoint_{iteration}.bin")))?;
            }
        }
    }
    if let (Some(w), Some(dir)) = (writer.as_mut(), out) {
        t.checkpoint().save(dir.join("checkpoint.bin"))?;
        w.event("finish", json!({ "episodes": t.episodes(), "env_steps": t.env_steps() }))?;
    }
    Ok(RunSummary {
        mode: config.mode,
        seed: config.seed,
        episodes: t.episodes(),
        env_steps: t.env_steps(),
        final_eval: evals.last().map_or(f64::NAN, |e| e.1),
        evals,
    })
}

#[cfg(test)]
mod tests;
