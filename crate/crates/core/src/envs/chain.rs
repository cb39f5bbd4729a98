use super::{check_joint_action, one_hot, Frame, MarkovGame, StepRecord};
use crate::error::Result;

/// Single-agent deterministic chain of five states. Moving right from the
/// start reaches the terminal state in four steps; each step pays a quarter
/// of the new position.
#[derive(Clone, Debug, Default)]
pub struct ChainMdp {
    pos: usize,
    t: usize,
    terminated: bool,
    calls: u64,
}

impl ChainMdp {
    pub const STATES: usize = 5;
    pub const LIMIT: usize = 20;
    pub const LEFT: usize = 0;
    pub const RIGHT: usize = 1;

    pub fn new() -> Self {
        Self::default()
    }

    pub fn position(&self) -> usize {
        self.pos
    }
}

impl MarkovGame for ChainMdp {
    fn name(&self) -> &'static str {
        "chain_mdp"
    }

    fn n_agents(&self) -> usize {
        1
    }

    fn state_dim(&self) -> usize {
        Self::STATES
    }

    fn obs_dim(&self) -> usize {
        Self::STATES
    }

    fn action_count(&self) -> usize {
        2
    }

    fn episode_limit(&self) -> usize {
        Self::LIMIT
    }

    fn reset(&mut self, _seed: u64) -> Frame {
        self.calls += 1;
        self.pos = 0;
        self.t = 0;
        self.terminated = false;
        self.frame()
    }

    fn step(&mut self, joint_action: &[usize]) -> Result<StepRecord> {
        self.calls += 1;
        check_joint_action(self, joint_action)?;
        let before = self.frame();
        self.pos = match joint_action[0] {
            Self::LEFT => self.pos.saturating_sub(1),
            _ => (self.pos + 1).min(Self::STATES - 1),
        };
        self.t += 1;
        self.terminated = self.pos == Self::STATES - 1;
        Ok(StepRecord {
            state: before.state,
            observations: before.observations,
            joint_action: joint_action.to_vec(),
            rewards: vec![0.25 * self.pos as f64],
            terminated: self.terminated,
            avail_actions: before.avail_actions,
        })
    }

    fn frame(&self) -> Frame {
        let s = one_hot(self.pos, Self::STATES);
        Frame { observations: vec![s.clone()], state: s, avail_actions: vec![vec![true; 2]] }
    }

    fn is_done(&self) -> bool {
        self.terminated || self.t >= Self::LIMIT
    }

    fn calls(&self) -> u64 {
        self.calls
    }
}
