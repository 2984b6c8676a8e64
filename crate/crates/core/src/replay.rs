use rand::Rng;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub obs: Vec<f64>,
    pub raw_action: Vec<f64>,
    pub reward: f64,
    pub next_obs: Vec<f64>,
    /// 1.0 when the episode ended in a true terminal state (no bootstrap).
    pub done_mask: f64,
}

/// A sampled minibatch in row-major flat layout.
#[derive(Debug, Clone, Default)]
pub struct Batch {
    pub n: usize,
    pub obs: Vec<f64>,
    pub actions: Vec<f64>,
    pub rewards: Vec<f64>,
    pub next_obs: Vec<f64>,
    pub done: Vec<f64>,
}

/// Fixed-capacity FIFO ring of transitions.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    obs_dim: usize,
    act_dim: usize,
    capacity: usize,
    inserted: u64,
    obs: Vec<f64>,
    actions: Vec<f64>,
    rewards: Vec<f64>,
    next_obs: Vec<f64>,
    done: Vec<f64>,
}

impl ReplayBuffer {
    pub fn new(obs_dim: usize, act_dim: usize, capacity: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        Self {
            obs_dim,
            act_dim,
            capacity,
            inserted: 0,
            obs: Vec::new(),
            actions: Vec::new(),
            rewards: Vec::new(),
            next_obs: Vec::new(),
            done: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Total number of pushes so far, including evicted ones.
    pub fn inserted(&self) -> u64 {
        self.inserted
    }

    pub fn push(&mut self, t: Transition) -> Result<()> {
        if t.obs.len() != self.obs_dim || t.next_obs.len() != self.obs_dim || t.raw_action.len() != self.act_dim {
            return Err(Error::Shape("transition does not match buffer dimensions".into()));
        }
        if t.raw_action.iter().any(|a| !(-1.0..=1.0).contains(a)) {
            return Err(Error::Range("stored raw actions must lie in [-1, 1]".into()));
        }
        if self.len() < self.capacity {
            self.obs.extend_from_slice(&t.obs);
            self.actions.extend_from_slice(&t.raw_action);
            self.rewards.push(t.reward);
            self.next_obs.extend_from_slice(&t.next_obs);
            self.done.push(t.done_mask);
        } else {
            let slot = (self.inserted % self.capacity as u64) as usize;
            let (o, a) = (self.obs_dim, self.act_dim);
            self.obs[slot * o..(slot + 1) * o].copy_from_slice(&t.obs);
            self.actions[slot * a..(slot + 1) * a].copy_from_slice(&t.raw_action);
            self.rewards[slot] = t.reward;
            self.next_obs[slot * o..(slot + 1) * o].copy_from_slice(&t.next_obs);
            self.done[slot] = t.done_mask;
        }
        self.inserted += 1;
        Ok(())
    }

    /// Transition `i` counted from the oldest entry still stored.
    pub fn get(&self, i: usize) -> Option<Transition> {
        if i >= self.len() {
            return None;
        }
        let slot = if self.len() < self.capacity {
            i
        } else {
            ((self.inserted as usize) + i) % self.capacity
        };
        Some(self.slot(slot))
    }

    fn slot(&self, s: usize) -> Transition {
        let (o, a) = (self.obs_dim, self.act_dim);
        Transition {
            obs: self.obs[s * o..(s + 1) * o].to_vec(),
            raw_action: self.actions[s * a..(s + 1) * a].to_vec(),
            reward: self.rewards[s],
            next_obs: self.next_obs[s * o..(s + 1) * o].to_vec(),
            done_mask: self.done[s],
        }
    }

    /// Uniform sample with replacement.
    pub fn sample(&self, n: usize, rng: &mut impl Rng) -> Batch {
        assert!(!self.is_empty(), "cannot sample from an empty buffer");
        let (o, a) = (self.obs_dim, self.act_dim);
        let mut b = Batch {
            n,
            obs: Vec::with_capacity(n * o),
            actions: Vec::with_capacity(n * a),
            rewards: Vec::with_capacity(n),
            next_obs: Vec::with_capacity(n * o),
            done: Vec::with_capacity(n),
        };
        for _ in 0..n {
            let s = rng.gen_range(0..self.len());
            b.obs.extend_from_slice(&self.obs[s * o..(s + 1) * o]);
            b.actions.extend_from_slice(&self.actions[s * a..(s + 1) * a]);
            b.rewards.push(self.rewards[s]);
            b.next_obs.extend_from_slice(&self.next_obs[s * o..(s + 1) * o]);
            b.done.push(self.done[s]);
        }
        b
    }
}
