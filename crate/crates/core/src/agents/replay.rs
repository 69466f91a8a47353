use std::collections::VecDeque;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::rng::RngState;
use crate::{Error, Result};

/// Bounded FIFO experience store with its own sampling stream. Logical
/// index 0 is the oldest entry.
#[derive(Debug, Clone)]
pub struct ReplayBuffer<T> {
    capacity: usize,
    items: VecDeque<T>,
    rng: ChaCha8Rng,
}

impl<T> ReplayBuffer<T> {
    pub fn new(capacity: usize, rng: ChaCha8Rng) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::InvalidConfig("replay capacity must be positive".into()));
        }
        Ok(ReplayBuffer {
            capacity,
            items: VecDeque::with_capacity(capacity.min(1 << 16)),
            rng,
        })
    }

    /// Rebuilds a buffer from entries listed oldest first.
    pub fn restore(capacity: usize, entries: Vec<T>, rng: ChaCha8Rng) -> Result<Self> {
        if entries.len() > capacity {
            return Err(Error::InvalidInput(format!(
                "{} replay entries exceed capacity {capacity}",
                entries.len()
            )));
        }
        let mut buf = ReplayBuffer::new(capacity, rng)?;
        buf.items.extend(entries);
        Ok(buf)
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// Appends an entry, evicting the oldest one when full.
    pub fn push(&mut self, item: T) {
        if self.items.len() == self.capacity {
            self.items.pop_front();
        }
        self.items.push_back(item);
    }

    pub fn get(&self, index: usize) -> Option<&T> {
        self.items.get(index)
    }

    pub fn iter(&self) -> impl Iterator<Item = &T> {
        self.items.iter()
    }

    /// `n` logical indices drawn uniformly with replacement.
    pub fn sample_indices(&mut self, n: usize) -> Result<Vec<usize>> {
        if self.items.is_empty() {
            return Err(Error::Contract("sampling from an empty replay buffer".into()));
        }
        let len = self.items.len();
        Ok((0..n).map(|_| self.rng.random_range(0..len)).collect())
    }

    pub fn sample(&mut self, n: usize) -> Result<Vec<&T>> {
        let picks = self.sample_indices(n)?;
        Ok(picks.into_iter().map(|i| &self.items[i]).collect())
    }

    pub fn rng_state(&self) -> RngState {
        RngState::capture(&self.rng)
    }
}
