use super::{check_joint_action, one_hot, Frame, MarkovGame, StepRecord};
use crate::error::Result;

/// Repeated two-player matching game over three actions: both agents earn 1
/// whenever their actions agree. Fully observable: state and observations
/// are the previous joint action.
#[derive(Clone, Debug, Default)]
pub struct SyncMatrix {
    prev: Option<[usize; 2]>,
    t: usize,
    calls: u64,
}

impl SyncMatrix {
    pub const LENGTH: usize = 10;
    const ACTIONS: usize = 3;

    pub fn new() -> Self {
        Self::default()
    }

    fn encode(&self) -> Vec<f64> {
        match self.prev {
            Some([a, b]) => {
                let mut v = one_hot(a, Self::ACTIONS);
                v.extend(one_hot(b, Self::ACTIONS));
                v
            }
            None => vec![0.0; 2 * Self::ACTIONS],
        }
    }
}

impl MarkovGame for SyncMatrix {
    fn name(&self) -> &'static str {
        "sync_matrix"
    }

    fn n_agents(&self) -> usize {
        2
    }

    fn state_dim(&self) -> usize {
        2 * Self::ACTIONS
    }

    fn obs_dim(&self) -> usize {
        2 * Self::ACTIONS
    }

    fn action_count(&self) -> usize {
        Self::ACTIONS
    }

    fn episode_limit(&self) -> usize {
        Self::LENGTH
    }

    fn reset(&mut self, _seed: u64) -> Frame {
        self.calls += 1;
        self.prev = None;
        self.t = 0;
        self.frame()
    }

    fn step(&mut self, joint_action: &[usize]) -> Result<StepRecord> {
        self.calls += 1;
        check_joint_action(self, joint_action)?;
        let before = self.frame();
        let r = if joint_action[0] == joint_action[1] { 1.0 } else { 0.0 };
        self.prev = Some([joint_action[0], joint_action[1]]);
        self.t += 1;
        Ok(StepRecord {
            state: before.state,
            observations: before.observations,
            joint_action: joint_action.to_vec(),
            rewards: vec![r; 2],
            terminated: false,
            avail_actions: before.avail_actions,
        })
    }

    fn frame(&self) -> Frame {
        let s = self.encode();
        Frame { observations: vec![s.clone(); 2], state: s, avail_actions: vec![vec![true; 3]; 2] }
    }

    fn is_done(&self) -> bool {
        self.t >= Self::LENGTH
    }

    fn calls(&self) -> u64 {
        self.calls
    }
}
