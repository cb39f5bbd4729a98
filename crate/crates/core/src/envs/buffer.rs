use std::collections::VecDeque;

use rand::Rng;

use super::Episode;
use crate::error::{Error, Result};
use crate::numerics::Tensor;

/// FIFO store of whole episodes bounded by the number of recorded steps.
#[derive(Clone, Debug)]
pub struct ModelBuffer {
    capacity: usize,
    episodes: VecDeque<Episode>,
    steps: usize,
}

impl ModelBuffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "buffer capacity must be positive");
        Self { capacity, episodes: VecDeque::new(), steps: 0 }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Recorded steps currently held.
    pub fn total_steps(&self) -> usize {
        self.steps
    }

    pub fn len(&self) -> usize {
        self.episodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.episodes.is_empty()
    }

    pub fn episodes(&self) -> impl Iterator<Item = &Episode> {
        self.episodes.iter()
    }

    /// Append and evict the oldest episodes until the step count fits. The
    /// newest episode is always kept, even when it alone exceeds capacity.
    pub fn append(&mut self, episode: Episode) {
        self.steps += episode.len();
        self.episodes.push_back(episode);
        while self.steps > self.capacity && self.episodes.len() > 1 {
            let old = self.episodes.pop_front().expect("non-empty");
            self.steps -= old.len();
        }
    }

    /// `(episode index, start frame)` of `count` uniformly drawn windows of
    /// `length` frames. Episodes are drawn uniformly, then the start.
    pub fn sample_starts(&self, count: usize, length: usize, rng: &mut (impl Rng + ?Sized)) -> Result<Vec<(usize, usize)>> {
        if self.episodes.is_empty() {
            return Err(Error::Contract("cannot sample from an empty model buffer".into()));
        }
        Ok((0..count)
            .map(|_| {
                let e = rng.gen_range(0..self.episodes.len());
                let frames = self.episodes[e].len() + 1;
                let start = if frames > length { rng.gen_range(0..=frames - length) } else { 0 };
                (e, start)
            })
            .collect())
    }

    pub fn sample(&self, count: usize, length: usize, rng: &mut (impl Rng + ?Sized)) -> Result<Batch> {
        let starts = self.sample_starts(count, length, rng)?;
        let windows: Vec<(&Episode, usize)> = starts.iter().map(|&(e, s)| (&self.episodes[e], s)).collect();
        Batch::from_windows(&windows, length)
    }
}

/// Time-major training windows. Row `b * n_agents + i` of every per-agent
/// tensor belongs to window `b`, agent `i`.
///
/// Frame `t` of a window carries `s_t`, `o_t`, the availability mask, the
/// action taken in it, the reward received on entering it and whether the
/// episode terminated on entering it.
#[derive(Clone, Debug)]
pub struct Batch {
    pub batch: usize,
    pub length: usize,
    pub n_agents: usize,
    pub action_count: usize,
    /// `[B, state_dim]` per frame.
    pub state: Vec<Tensor>,
    /// `[B*N, obs_dim]` per frame.
    pub obs: Vec<Tensor>,
    /// One-hot action taken in the frame, `[B*N, A]`; zeros on final and
    /// padded frames.
    pub action: Vec<Tensor>,
    /// Reward received on entering the frame, `[B*N, 1]`.
    pub reward: Vec<Tensor>,
    /// 1 when the episode terminated on entering the frame, `[B*N, 1]`.
    pub done: Vec<Tensor>,
    /// Availability as 0/1, `[B*N, A]`.
    pub avail: Vec<Tensor>,
    /// 1 on real frames, 0 on padding, `[B*N, 1]`.
    pub mask: Vec<Tensor>,
    /// 1 where an action was taken in the frame.
    pub action_mask: Vec<Tensor>,
    /// 1 where a reward was received on entering the frame.
    pub reward_mask: Vec<Tensor>,
    pub starts: Vec<usize>,
    /// Window begins at the first frame of its episode.
    pub fresh_start: Vec<bool>,
}

impl Batch {
    pub fn from_windows(windows: &[(&Episode, usize)], length: usize) -> Result<Self> {
        if windows.is_empty() || length == 0 {
            return Err(Error::Contract("batch needs at least one window of positive length".into()));
        }
        let first = &windows[0].0.last;
        let n = first.observations.len();
        let a = first.avail_actions[0].len();
        let (sd, od) = (first.state.len(), first.observations[0].len());
        let b = windows.len();
        let mut out = Self {
            batch: b,
            length,
            n_agents: n,
            action_count: a,
            state: Vec::with_capacity(length),
            obs: Vec::with_capacity(length),
            action: Vec::with_capacity(length),
            reward: Vec::with_capacity(length),
            done: Vec::with_capacity(length),
            avail: Vec::with_capacity(length),
            mask: Vec::with_capacity(length),
            action_mask: Vec::with_capacity(length),
            reward_mask: Vec::with_capacity(length),
            starts: windows.iter().map(|w| w.1).collect(),
            fresh_start: windows.iter().map(|w| w.1 == 0).collect(),
        };
        for t in 0..length {
            let mut state = vec![0.0; b * sd];
            let mut obs = vec![0.0; b * n * od];
            let mut action = vec![0.0; b * n * a];
            let mut reward = vec![0.0; b * n];
            let mut done = vec![0.0; b * n];
            let mut avail = vec![0.0; b * n * a];
            let mut mask = vec![0.0; b * n];
            let mut action_mask = vec![0.0; b * n];
            let mut reward_mask = vec![0.0; b * n];
            for (w, &(ep, start)) in windows.iter().enumerate() {
                let k = start + t;
                if k > ep.len() {
                    continue;
                }
                let frame = ep.frame(k);
                if frame.state.len() != sd || frame.observations.len() != n {
                    return Err(Error::Contract("episodes in one batch must share dimensions".into()));
                }
                state[w * sd..(w + 1) * sd].copy_from_slice(&frame.state);
                for i in 0..n {
                    let row = w * n + i;
                    obs[row * od..(row + 1) * od].copy_from_slice(&frame.observations[i]);
                    for (dst, &ok) in avail[row * a..(row + 1) * a].iter_mut().zip(&frame.avail_actions[i]) {
                        *dst = if ok { 1.0 } else { 0.0 };
                    }
                    mask[row] = 1.0;
                    if k < ep.len() {
                        action[row * a + ep.steps[k].joint_action[i]] = 1.0;
                        action_mask[row] = 1.0;
                    }
                    if k > 0 {
                        reward[row] = ep.steps[k - 1].rewards[i];
                        reward_mask[row] = 1.0;
                        if k == ep.len() && ep.terminated() {
                            done[row] = 1.0;
                        }
                    }
                }
            }
            out.state.push(Tensor::new(vec![b, sd], state));
            out.obs.push(Tensor::new(vec![b * n, od], obs));
            out.action.push(Tensor::new(vec![b * n, a], action));
            out.reward.push(Tensor::new(vec![b * n, 1], reward));
            out.done.push(Tensor::new(vec![b * n, 1], done));
            out.avail.push(Tensor::new(vec![b * n, a], avail));
            out.mask.push(Tensor::new(vec![b * n, 1], mask));
            out.action_mask.push(Tensor::new(vec![b * n, 1], action_mask));
            out.reward_mask.push(Tensor::new(vec![b * n, 1], reward_mask));
        }
        Ok(out)
    }

    /// Whole episodes from their first frame, padded to the longest.
    pub fn from_episodes(episodes: &[Episode]) -> Result<Self> {
        let length = episodes.iter().map(|e| e.len() + 1).max().unwrap_or(0);
        let windows: Vec<(&Episode, usize)> = episodes.iter().map(|e| (e, 0)).collect();
        Self::from_windows(&windows, length)
    }

    pub fn rows(&self) -> usize {
        self.batch * self.n_agents
    }

    pub fn state_dim(&self) -> usize {
        self.state[0].cols()
    }

    pub fn obs_dim(&self) -> usize {
        self.obs[0].cols()
    }

    /// Number of real (agent, frame) entries.
    pub fn valid_entries(&self) -> f64 {
        self.mask.iter().map(Tensor::sum).sum()
    }
}
