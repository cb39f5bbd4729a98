use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{check_joint_action, one_hot, Frame, MarkovGame, StepRecord};
use crate::error::Result;

pub const CELLS: usize = 7;
pub const LEFT: usize = 0;
pub const STAY: usize = 1;
pub const RIGHT: usize = 2;

/// Two agents in a corridor of seven cells must meet on a hidden goal cell.
///
/// Each agent sees its own position, whether the other agent shares its
/// cell, and the goal only when it is within one cell. The state holds both
/// positions and the goal.
#[derive(Clone, Debug)]
pub struct CorridorMeet {
    pos: [usize; 2],
    goal: usize,
    t: usize,
    terminated: bool,
    calls: u64,
}

impl Default for CorridorMeet {
    fn default() -> Self {
        Self::new()
    }
}

impl CorridorMeet {
    pub const LIMIT: usize = 50;

    pub fn new() -> Self {
        Self { pos: [0, CELLS - 1], goal: 1, t: 0, terminated: false, calls: 0 }
    }

    pub fn positions(&self) -> [usize; 2] {
        self.pos
    }

    pub fn goal(&self) -> usize {
        self.goal
    }

    /// Place agents and goal directly (for tests and scripted data).
    pub fn set(&mut self, pos: [usize; 2], goal: usize) {
        assert!(pos.iter().all(|&p| p < CELLS) && (1..CELLS - 1).contains(&goal));
        self.pos = pos;
        self.goal = goal;
    }

    fn observe(&self, i: usize) -> Vec<f64> {
        let me = self.pos[i];
        let other = self.pos[1 - i];
        let mut o = one_hot(me, CELLS);
        o.push(if me == other { 1.0 } else { 0.0 });
        if me.abs_diff(self.goal) <= 1 {
            o.extend(one_hot(self.goal, CELLS));
        } else {
            o.extend([0.0; CELLS]);
        }
        o
    }
}

impl MarkovGame for CorridorMeet {
    fn name(&self) -> &'static str {
        "corridor_meet"
    }

    fn n_agents(&self) -> usize {
        2
    }

    fn state_dim(&self) -> usize {
        3 * CELLS
    }

    fn obs_dim(&self) -> usize {
        2 * CELLS + 1
    }

    fn action_count(&self) -> usize {
        3
    }

    fn episode_limit(&self) -> usize {
        Self::LIMIT
    }

    fn reset(&mut self, seed: u64) -> Frame {
        self.calls += 1;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        self.pos = [0, CELLS - 1];
        self.goal = rng.gen_range(1..CELLS - 1);
        self.t = 0;
        self.terminated = false;
        self.frame()
    }

    fn step(&mut self, joint_action: &[usize]) -> Result<StepRecord> {
        self.calls += 1;
        check_joint_action(self, joint_action)?;
        let before = self.frame();
        for (p, &a) in self.pos.iter_mut().zip(joint_action) {
            *p = match a {
                LEFT => p.saturating_sub(1),
                RIGHT => (*p + 1).min(CELLS - 1),
                _ => *p,
            };
        }
        self.t += 1;
        self.terminated = self.pos.iter().all(|&p| p == self.goal);
        let r = if self.terminated { 1.0 } else { -0.01 };
        Ok(StepRecord {
            state: before.state,
            observations: before.observations,
            joint_action: joint_action.to_vec(),
            rewards: vec![r; 2],
            terminated: self.terminated,
            avail_actions: before.avail_actions,
        })
    }

    fn frame(&self) -> Frame {
        let mut state = one_hot(self.pos[0], CELLS);
        state.extend(one_hot(self.pos[1], CELLS));
        state.extend(one_hot(self.goal, CELLS));
        Frame {
            state,
            observations: (0..2).map(|i| self.observe(i)).collect(),
            avail_actions: vec![vec![true; 3]; 2],
        }
    }

    fn is_done(&self) -> bool {
        self.terminated || self.t >= Self::LIMIT
    }

    fn calls(&self) -> u64 {
        self.calls
    }
}

/// Scripted policy reading only agent `i`'s observation: walk towards the
/// goal once it is visible, otherwise sweep towards the far end.
pub fn sweep_action(obs: &[f64], agent: usize) -> usize {
    let pos = obs[..CELLS].iter().position(|&v| v == 1.0).expect("position one-hot");
    match obs[CELLS + 1..].iter().position(|&v| v == 1.0) {
        Some(g) if g < pos => LEFT,
        Some(g) if g > pos => RIGHT,
        Some(_) => STAY,
        None if agent == 0 => RIGHT,
        None => LEFT,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::rollout;

    fn goal_of(obs: &[f64]) -> Option<usize> {
        obs[CELLS + 1..].iter().position(|&v| v == 1.0)
    }

    #[test]
    fn reset_places_agents_at_the_ends() {
        let mut env = CorridorMeet::new();
        let f = env.reset(0);
        assert_eq!(env.positions(), [0, 6]);
        assert!((1..=5).contains(&env.goal()));
        assert_eq!(f.avail_actions, vec![vec![true; 3]; 2]);
        assert_eq!(f.state.len(), env.state_dim());
        assert!(f.observations.iter().all(|o| o.len() == env.obs_dim()));
        let mut again = CorridorMeet::new();
        again.reset(0);
        assert_eq!(again.goal(), env.goal());
    }

    #[test]
    fn every_goal_is_drawn() {
        let mut env = CorridorMeet::new();
        let mut seen = [false; CELLS];
        for seed in 0..200 {
            env.reset(seed);
            seen[env.goal()] = true;
        }
        assert_eq!(seen, [false, true, true, true, true, true, false]);
    }

    #[test]
    fn goal_is_hidden_beyond_one_cell() {
        let mut env = CorridorMeet::new();
        env.reset(0);
        for goal in 1..=5 {
            env.set([0, 6], goal);
            let f = env.frame();
            for (i, p) in [0usize, 6].into_iter().enumerate() {
                let visible = goal_of(&f.observations[i]);
                if p.abs_diff(goal) <= 1 {
                    assert_eq!(visible, Some(goal));
                } else {
                    assert_eq!(visible, None);
                }
            }
        }
    }

    #[test]
    fn distinct_states_share_observations() {
        let mut env = CorridorMeet::new();
        env.reset(0);
        env.set([0, 6], 3);
        let a = env.frame();
        env.set([0, 6], 4);
        let b = env.frame();
        assert_ne!(a.state, b.state);
        assert_eq!(a.observations, b.observations);
    }

    #[test]
    fn movement_clamps_at_the_walls() {
        let mut env = CorridorMeet::new();
        env.reset(0);
        env.set([0, 6], 3);
        env.step(&[LEFT, RIGHT]).unwrap();
        assert_eq!(env.positions(), [0, 6]);
        env.step(&[RIGHT, LEFT]).unwrap();
        assert_eq!(env.positions(), [1, 5]);
    }

    #[test]
    fn meeting_on_goal_pays_and_terminates() {
        let mut env = CorridorMeet::new();
        env.reset(0);
        env.set([2, 4], 3);
        let r = env.step(&[RIGHT, STAY]).unwrap();
        assert_eq!(r.rewards, vec![-0.01, -0.01]);
        assert!(!r.terminated);
        let r = env.step(&[STAY, LEFT]).unwrap();
        assert_eq!(r.rewards, vec![1.0, 1.0]);
        assert!(r.terminated);
        assert!(env.is_done());
        assert!(env.step(&[STAY, STAY]).is_err());
    }

    #[test]
    fn invalid_actions_are_rejected() {
        let mut env = CorridorMeet::new();
        env.reset(0);
        assert!(env.step(&[3, 0]).is_err());
        assert!(env.step(&[0]).is_err());
    }

    #[test]
    fn time_limit_truncates_without_termination() {
        let mut env = CorridorMeet::new();
        let ep = rollout(&mut env, 1, |_, _| vec![STAY, STAY]).unwrap();
        assert_eq!(ep.len(), CorridorMeet::LIMIT);
        assert!(!ep.terminated());
        assert!(ep.steps.iter().all(|s| s.rewards == vec![-0.01, -0.01]));
    }

    #[test]
    fn replay_is_bit_exact() {
        let play = || {
            let mut env = CorridorMeet::new();
            rollout(&mut env, 42, |_, t| vec![(t * 7) % 3, (t * 5 + 1) % 3]).unwrap()
        };
        assert_eq!(play(), play());
    }

    #[test]
    fn sweep_always_meets() {
        let mut env = CorridorMeet::new();
        for seed in 0..50 {
            let ep = rollout(&mut env, seed, |f, _| {
                (0..2).map(|i| sweep_action(&f.observations[i], i)).collect()
            })
            .unwrap();
            assert!(ep.terminated());
            assert!(ep.len() <= 10);
            for s in &ep.steps {
                assert_eq!(s.rewards[0], s.rewards[1]);
            }
        }
    }
}
