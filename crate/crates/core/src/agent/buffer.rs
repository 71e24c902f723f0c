use ndarray::Array2;
use rand::Rng as _;

use crate::decorrelation::FeatureBatch;
use crate::error::{invalid, Result, SgfdError};
use crate::rng::Rng;
use crate::Scalar;

/// One environment step, labeled with the training environment it came from.
#[derive(Clone, Debug, PartialEq)]
pub struct Transition<T> {
    pub state: Vec<T>,
    pub action: Vec<T>,
    pub reward: T,
    pub next_state: Vec<T>,
    pub done: bool,
    pub env: usize,
}

/// Transitions drawn from a [`ReplayBuffer`], stored column-wise.
#[derive(Clone, Debug)]
pub struct SampledBatch<T> {
    pub states: Array2<T>,
    pub actions: Array2<T>,
    pub rewards: Vec<T>,
    pub next_states: Array2<T>,
    pub dones: Vec<bool>,
    pub env_labels: Vec<usize>,
    pub num_envs: usize,
}

impl<T: Scalar> SampledBatch<T> {
    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }

    /// The states with their environment labels, as consumed by decorrelation and saliency.
    pub fn features(&self) -> Result<FeatureBatch<T>> {
        FeatureBatch::new(self.states.clone(), self.env_labels.clone(), self.num_envs)
    }
}

/// Fixed-capacity FIFO store; the oldest transition is evicted first.
#[derive(Clone, Debug)]
pub struct ReplayBuffer<T> {
    capacity: usize,
    state_dim: usize,
    action_dim: usize,
    num_envs: usize,
    items: Vec<Transition<T>>,
    head: usize,
    rng: Rng,
}

impl<T: Scalar> ReplayBuffer<T> {
    pub fn new(
        capacity: usize,
        state_dim: usize,
        action_dim: usize,
        num_envs: usize,
        rng: Rng,
    ) -> Result<Self> {
        if capacity == 0 || state_dim == 0 || action_dim == 0 || num_envs == 0 {
            return invalid("buffer capacity and dimensions must be positive");
        }
        Ok(ReplayBuffer {
            capacity,
            state_dim,
            action_dim,
            num_envs,
            items: Vec::with_capacity(capacity.min(1 << 16)),
            head: 0,
            rng,
        })
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn num_envs(&self) -> usize {
        self.num_envs
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn push(&mut self, t: Transition<T>) -> Result<()> {
        if t.state.len() != self.state_dim
            || t.next_state.len() != self.state_dim
            || t.action.len() != self.action_dim
        {
            return invalid("transition dimensions do not match the buffer");
        }
        if t.env >= self.num_envs {
            return invalid(format!("environment label {} out of range", t.env));
        }
        let finite = t.reward.is_finite()
            && t.state
                .iter()
                .chain(&t.next_state)
                .chain(&t.action)
                .all(|v| v.is_finite());
        if !finite {
            return invalid("transition contains a non-finite value");
        }
        if self.items.len() < self.capacity {
            self.items.push(t);
        } else {
            self.items[self.head] = t;
            self.head = (self.head + 1) % self.capacity;
        }
        Ok(())
    }

    /// The `i`-th stored transition, oldest first.
    pub fn get(&self, i: usize) -> Option<&Transition<T>> {
        if i >= self.items.len() {
            return None;
        }
        Some(&self.items[(self.head + i) % self.items.len()])
    }

    pub fn iter(&self) -> impl Iterator<Item = &Transition<T>> {
        (0..self.len()).filter_map(move |i| self.get(i))
    }

    /// Uniform sample with replacement.
    pub fn sample(&mut self, n: usize) -> Result<SampledBatch<T>> {
        if n == 0 || self.items.len() < n {
            return Err(SgfdError::InsufficientData {
                needed: n.max(1),
                available: self.items.len(),
            });
        }
        let (d, a) = (self.state_dim, self.action_dim);
        let mut states = Array2::zeros((n, d));
        let mut actions = Array2::zeros((n, a));
        let mut next_states = Array2::zeros((n, d));
        let mut rewards = Vec::with_capacity(n);
        let mut dones = Vec::with_capacity(n);
        let mut env_labels = Vec::with_capacity(n);
        for k in 0..n {
            let t = &self.items[self.rng.random_range(0..self.items.len())];
            for j in 0..d {
                states[[k, j]] = t.state[j];
                next_states[[k, j]] = t.next_state[j];
            }
            for j in 0..a {
                actions[[k, j]] = t.action[j];
            }
            rewards.push(t.reward);
            dones.push(t.done);
            env_labels.push(t.env);
        }
        Ok(SampledBatch {
            states,
            actions,
            rewards,
            next_states,
            dones,
            env_labels,
            num_envs: self.num_envs,
        })
    }

    pub fn sample_features(&mut self, n: usize) -> Result<FeatureBatch<T>> {
        self.sample(n)?.features()
    }
}
