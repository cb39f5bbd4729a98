//! Partially observable Markov games, recorded episodes and the model
//! buffer.

mod buffer;
mod chain;
mod corridor;
mod dump;
mod sync;

pub use buffer::{Batch, ModelBuffer};
pub use chain::ChainMdp;
pub use corridor::{sweep_action, CorridorMeet};
pub use dump::{read_episode_jsonl, write_episode_jsonl};
pub use sync::SyncMatrix;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// What every agent can see, plus the full state, at one time step.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Frame {
    pub state: Vec<f64>,
    pub observations: Vec<Vec<f64>>,
    pub avail_actions: Vec<Vec<bool>>,
}

/// One real transition, recorded with the frame the action was chosen in.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub state: Vec<f64>,
    pub observations: Vec<Vec<f64>>,
    pub joint_action: Vec<usize>,
    pub rewards: Vec<f64>,
    pub terminated: bool,
    pub avail_actions: Vec<Vec<bool>>,
}

impl StepRecord {
    pub fn frame(&self) -> Frame {
        Frame {
            state: self.state.clone(),
            observations: self.observations.clone(),
            avail_actions: self.avail_actions.clone(),
        }
    }
}

/// A complete episode: `steps[t]` holds frame `t` and the action taken in
/// it, `last` is the frame reached after the final action.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Episode {
    pub steps: Vec<StepRecord>,
    pub last: Frame,
}

impl Episode {
    /// Number of actions taken.
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// `true` when the environment ended the episode (as opposed to the time
    /// limit).
    pub fn terminated(&self) -> bool {
        self.steps.last().is_some_and(|s| s.terminated)
    }

    /// Frame `k` for `k` in `0..=len()`.
    pub fn frame(&self, k: usize) -> Frame {
        if k == self.steps.len() {
            self.last.clone()
        } else {
            self.steps[k].frame()
        }
    }

    /// Undiscounted return of agent 0.
    pub fn total_reward(&self) -> f64 {
        self.steps.iter().map(|s| s.rewards[0]).sum()
    }
}

pub trait MarkovGame {
    fn name(&self) -> &'static str;
    fn n_agents(&self) -> usize;
    fn state_dim(&self) -> usize;
    fn obs_dim(&self) -> usize;
    fn action_count(&self) -> usize;
    fn episode_limit(&self) -> usize;

    /// Start a new episode; the seed fully determines it.
    fn reset(&mut self, seed: u64) -> Frame;

    /// Apply one joint action taken in the current frame.
    fn step(&mut self, joint_action: &[usize]) -> Result<StepRecord>;

    /// The current frame.
    fn frame(&self) -> Frame;

    /// Terminated or out of time.
    fn is_done(&self) -> bool;

    /// Number of `reset` plus `step` calls so far.
    fn calls(&self) -> u64;
}

pub fn make_env(name: &str) -> Result<Box<dyn MarkovGame>> {
    match name {
        "corridor_meet" => Ok(Box::new(CorridorMeet::new())),
        "sync_matrix" => Ok(Box::new(SyncMatrix::new())),
        "chain_mdp" => Ok(Box::new(ChainMdp::new())),
        other => Err(Error::Config(format!(
            "unknown env `{other}` (expected corridor_meet, sync_matrix or chain_mdp)"
        ))),
    }
}

pub const ENV_NAMES: [&str; 3] = ["corridor_meet", "sync_matrix", "chain_mdp"];

pub(crate) fn one_hot(index: usize, len: usize) -> Vec<f64> {
    let mut v = vec![0.0; len];
    v[index] = 1.0;
    v
}

/// Shared precondition checks for `step`.
pub(crate) fn check_joint_action(game: &dyn MarkovGame, joint_action: &[usize]) -> Result<()> {
    if game.is_done() {
        return Err(Error::Contract(format!("{}: step after the episode ended", game.name())));
    }
    if joint_action.len() != game.n_agents() {
        return Err(Error::Contract(format!(
            "{}: expected {} actions, got {}",
            game.name(),
            game.n_agents(),
            joint_action.len()
        )));
    }
    let frame = game.frame();
    for (i, &a) in joint_action.iter().enumerate() {
        if !frame.avail_actions[i].get(a).copied().unwrap_or(false) {
            return Err(Error::Contract(format!("{}: action {a} unavailable to agent {i}", game.name())));
        }
    }
    Ok(())
}

/// Play one episode with `policy(frame, t)` choosing the joint action.
pub fn rollout(
    env: &mut dyn MarkovGame,
    seed: u64,
    mut policy: impl FnMut(&Frame, usize) -> Vec<usize>,
) -> Result<Episode> {
    let mut frame = env.reset(seed);
    let mut steps = Vec::new();
    while !env.is_done() {
        let action = policy(&frame, steps.len());
        steps.push(env.step(&action)?);
        frame = env.frame();
    }
    Ok(Episode { steps, last: frame })
}
