//! FIFO replay buffer over flat transition arrays, optionally carrying a
//! per-transition Monte-Carlo return label.

use task_suite::{OfflineDataset, Transition};

pub struct ReplayBuffer {
    capacity: usize,
    obs_dim: usize,
    act_dim: usize,
    observations: Vec<f32>,
    actions: Vec<f32>,
    rewards: Vec<f32>,
    next_observations: Vec<f32>,
    terminals: Vec<f32>,
    mc_returns: Vec<f32>,
    cursor: usize,
    count: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize, obs_dim: usize, act_dim: usize) -> ReplayBuffer {
        assert!(capacity > 0);
        ReplayBuffer {
            capacity,
            obs_dim,
            act_dim,
            observations: vec![0.0; capacity * obs_dim],
            actions: vec![0.0; capacity * act_dim],
            rewards: vec![0.0; capacity],
            next_observations: vec![0.0; capacity * obs_dim],
            terminals: vec![0.0; capacity],
            mc_returns: vec![0.0; capacity],
            cursor: 0,
            count: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.count
    }

    pub fn is_empty(&self) -> bool {
        self.count == 0
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn obs_dim(&self) -> usize {
        self.obs_dim
    }

    pub fn act_dim(&self) -> usize {
        self.act_dim
    }

    /// Appends one transition, overwriting the oldest slot when full.
    /// Terminal flags treat timeouts as non-terminal for bootstrapping.
    pub fn push(&mut self, t: &Transition, mc_return: f32) {
        debug_assert_eq!(t.observation.len(), self.obs_dim);
        debug_assert_eq!(t.action.len(), self.act_dim);
        let i = self.cursor;
        self.observations[i * self.obs_dim..(i + 1) * self.obs_dim].copy_from_slice(&t.observation);
        self.actions[i * self.act_dim..(i + 1) * self.act_dim].copy_from_slice(&t.action);
        self.rewards[i] = t.reward;
        self.next_observations[i * self.obs_dim..(i + 1) * self.obs_dim]
            .copy_from_slice(&t.next_observation);
        self.terminals[i] = if t.terminal { 1.0 } else { 0.0 };
        self.mc_returns[i] = mc_return;
        self.cursor = (self.cursor + 1) % self.capacity;
        self.count = (self.count + 1).min(self.capacity);
    }

    /// Pre-seeds with a full offline dataset (optionally with MC labels).
    pub fn preload(&mut self, dataset: &OfflineDataset, mc: Option<&[f32]>) {
        for i in 0..dataset.len() {
            let t = dataset.transition(i);
            self.push(&t, mc.map_or(0.0, |m| m[i]));
        }
    }

    pub fn observation(&self, i: usize) -> &[f32] {
        debug_assert!(i < self.count);
        &self.observations[i * self.obs_dim..(i + 1) * self.obs_dim]
    }

    pub fn action(&self, i: usize) -> &[f32] {
        &self.actions[i * self.act_dim..(i + 1) * self.act_dim]
    }

    pub fn reward(&self, i: usize) -> f32 {
        self.rewards[i]
    }

    pub fn next_observation(&self, i: usize) -> &[f32] {
        &self.next_observations[i * self.obs_dim..(i + 1) * self.obs_dim]
    }

    pub fn terminal(&self, i: usize) -> f32 {
        self.terminals[i]
    }

    pub fn mc_return(&self, i: usize) -> f32 {
        self.mc_returns[i]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(v: f32, terminal: bool) -> Transition {
        Transition {
            observation: vec![v],
            action: vec![v],
            reward: v,
            next_observation: vec![v + 1.0],
            terminal,
            timeout: false,
        }
    }

    #[test]
    fn fifo_overwrite_when_full() {
        let mut buf = ReplayBuffer::new(3, 1, 1);
        for i in 0..5 {
            buf.push(&t(i as f32, false), 0.0);
        }
        assert_eq!(buf.len(), 3);
        // slots now hold 3, 4 (wrapped) and 2
        let rewards: Vec<f32> = (0..3).map(|i| buf.reward(i)).collect();
        assert_eq!(rewards, vec![3.0, 4.0, 2.0]);
    }

    #[test]
    fn count_tracks_until_capacity() {
        let mut buf = ReplayBuffer::new(4, 1, 1);
        assert!(buf.is_empty());
        buf.push(&t(0.5, true), 2.5);
        assert_eq!(buf.len(), 1);
        assert_eq!(buf.terminal(0), 1.0);
        assert_eq!(buf.mc_return(0), 2.5);
    }

    #[test]
    fn preload_copies_dataset() {
        let ds = task_suite::make_dataset("swing", "random", 100, 0).unwrap();
        let mut buf = ReplayBuffer::new(1000, ds.obs_dim(), ds.act_dim());
        buf.preload(&ds, None);
        assert_eq!(buf.len(), 100);
        assert_eq!(buf.observation(7), ds.observation(7));
        assert_eq!(buf.reward(42), ds.rewards[42]);
    }
}
