use rand::Rng;

use super::{priority_weight, SumTree, Transition};
use crate::error::{Error, Result};

/// Handle to a stored transition. Carries the insertion id so that handles
/// to evicted entries can be recognized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct BufferIndex {
    slot: usize,
    id: u64,
}

impl BufferIndex {
    pub fn slot(&self) -> usize {
        self.slot
    }
}

/// Ring buffer of transitions with sum-tree priorities `w = exp(log_ratio / (1 + μ))`.
#[derive(Debug, Clone)]
pub struct PrioritizedBuffer {
    capacity: usize,
    mu: f64,
    entries: Vec<(u64, Transition)>,
    tree: SumTree,
    cursor: usize,
    next_id: u64,
    stale_skips: u64,
}

impl PrioritizedBuffer {
    pub fn new(capacity: usize, mu: f64) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::config("buffer capacity must be positive"));
        }
        priority_weight(0.0, mu)?;
        Ok(Self {
            capacity,
            mu,
            entries: Vec::with_capacity(capacity.min(1 << 20)),
            tree: SumTree::new(capacity),
            cursor: 0,
            next_id: 0,
            stale_skips: 0,
        })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn total_priority(&self) -> f64 {
        self.tree.total()
    }

    pub fn tree(&self) -> &SumTree {
        &self.tree
    }

    /// Number of priority updates dropped because their entry had been overwritten.
    pub fn stale_skips(&self) -> u64 {
        self.stale_skips
    }

    pub fn transitions(&self) -> impl Iterator<Item = &Transition> {
        self.entries.iter().map(|(_, t)| t)
    }

    /// Priority currently held by a live entry.
    pub fn priority(&self, index: BufferIndex) -> Option<f64> {
        self.is_live(index).then(|| self.tree.get(index.slot))
    }

    pub fn get(&self, index: BufferIndex) -> Option<&Transition> {
        self.is_live(index).then(|| &self.entries[index.slot].1)
    }

    fn is_live(&self, index: BufferIndex) -> bool {
        self.entries.get(index.slot).is_some_and(|(id, _)| *id == index.id)
    }

    fn handle(&self, slot: usize) -> BufferIndex {
        BufferIndex { slot, id: self.entries[slot].0 }
    }

    /// Store `transition` with the priority implied by `log_ratio`, evicting
    /// the oldest entry once full.
    pub fn push(&mut self, transition: Transition, log_ratio: f64) -> Result<BufferIndex> {
        let w = priority_weight(log_ratio, self.mu)?;
        let slot = self.cursor;
        let id = self.next_id;
        self.next_id += 1;
        if slot == self.entries.len() {
            self.entries.push((id, transition));
        } else {
            self.entries[slot] = (id, transition);
        }
        self.tree.set(slot, w);
        self.cursor = (self.cursor + 1) % self.capacity;
        Ok(BufferIndex { slot, id })
    }

    /// `n` draws with probability proportional to priority.
    pub fn sample_batch<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<(Vec<BufferIndex>, Vec<Transition>)> {
        if self.is_empty() {
            return Err(Error::state("cannot sample from an empty buffer"));
        }
        let slots = self.tree.sample_stratified(n, rng);
        Ok(self.gather(&slots))
    }

    /// `n` uniform draws with replacement, ignoring priorities.
    pub fn sample_uniform<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<(Vec<BufferIndex>, Vec<Transition>)> {
        if self.is_empty() {
            return Err(Error::state("cannot sample from an empty buffer"));
        }
        let slots: Vec<usize> = (0..n).map(|_| rng.random_range(0..self.len())).collect();
        Ok(self.gather(&slots))
    }

    fn gather(&self, slots: &[usize]) -> (Vec<BufferIndex>, Vec<Transition>) {
        let idx = slots.iter().map(|&s| self.handle(s)).collect();
        let tr = slots.iter().map(|&s| self.entries[s].1.clone()).collect();
        (idx, tr)
    }

    /// Recompute priorities of the given entries from fresh log-ratios.
    /// Handles to evicted entries are skipped and counted.
    pub fn update_priorities(&mut self, indices: &[BufferIndex], log_ratios: &[f64]) -> Result<()> {
        if indices.len() != log_ratios.len() {
            return Err(Error::input("indices and log-ratios differ in length"));
        }
        for (index, lr) in indices.iter().zip(log_ratios) {
            if !self.is_live(*index) {
                self.stale_skips += 1;
                continue;
            }
            let w = priority_weight(*lr, self.mu)?;
            self.tree.set(index.slot, w);
        }
        Ok(())
    }

    /// Re-prioritize every live entry. `log_ratios` receives chunks of stored
    /// transitions and must return one log-ratio per transition.
    pub fn refresh_all<F>(&mut self, chunk: usize, mut log_ratios: F) -> Result<()>
    where
        F: FnMut(&[&Transition]) -> Result<Vec<f64>>,
    {
        let chunk = chunk.max(1);
        let mut start = 0;
        while start < self.entries.len() {
            let end = (start + chunk).min(self.entries.len());
            let refs: Vec<&Transition> = self.entries[start..end].iter().map(|(_, t)| t).collect();
            let lrs = log_ratios(&refs)?;
            if lrs.len() != refs.len() {
                return Err(Error::input("refresh callback returned the wrong number of log-ratios"));
            }
            for (k, lr) in lrs.iter().enumerate() {
                let w = priority_weight(*lr, self.mu)?;
                self.tree.set(start + k, w);
            }
            start = end;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seeding::rng_from_seed;

    fn tr(x: f64) -> Transition {
        Transition::new(vec![x], vec![0.0], x, vec![x + 1.0], false)
    }

    #[test]
    fn first_push_sets_root() {
        let mut b = PrioritizedBuffer::new(4, 1.0).unwrap();
        b.push(tr(0.0), 2.0).unwrap();
        assert!((b.total_priority() - 1f64.exp()).abs() < 1e-12);
    }

    #[test]
    fn ring_eviction() {
        let mut b = PrioritizedBuffer::new(3, 1.0).unwrap();
        let first = b.push(tr(0.0), 0.0).unwrap();
        for k in 1..=3 {
            b.push(tr(k as f64), 0.0).unwrap();
        }
        assert_eq!(b.len(), 3);
        assert!(b.get(first).is_none());
        let xs: Vec<f64> = b.transitions().map(|t| t.r).collect();
        assert!(!xs.contains(&0.0));
        b.update_priorities(&[first], &[5.0]).unwrap();
        assert_eq!(b.stale_skips(), 1);
        assert!((b.total_priority() - 3.0).abs() < 1e-12);
    }

    #[test]
    fn empty_buffer_cannot_sample() {
        let b = PrioritizedBuffer::new(3, 1.0).unwrap();
        let mut rng = rng_from_seed(0);
        assert!(matches!(b.sample_batch(2, &mut rng), Err(Error::State(_))));
        assert!(matches!(b.sample_uniform(2, &mut rng), Err(Error::State(_))));
        assert!(PrioritizedBuffer::new(0, 1.0).is_err());
        assert!(PrioritizedBuffer::new(3, -1.0).is_err());
    }

    #[test]
    fn same_log_ratios_are_idempotent() {
        let mut b = PrioritizedBuffer::new(8, 0.5).unwrap();
        let idx: Vec<BufferIndex> = (0..5).map(|k| b.push(tr(k as f64), k as f64 * 0.3).unwrap()).collect();
        let before: Vec<f64> = idx.iter().map(|i| b.priority(*i).unwrap()).collect();
        let lrs: Vec<f64> = (0..5).map(|k| k as f64 * 0.3).collect();
        b.update_priorities(&idx, &lrs).unwrap();
        let after: Vec<f64> = idx.iter().map(|i| b.priority(*i).unwrap()).collect();
        assert_eq!(before, after);
    }

    #[test]
    fn refresh_all_rewrites_every_priority() {
        let mut b = PrioritizedBuffer::new(10, 0.0).unwrap();
        for k in 0..7 {
            b.push(tr(k as f64), 0.0).unwrap();
        }
        b.refresh_all(3, |ts| Ok(ts.iter().map(|t| (t.r + 1.0).ln()).collect())).unwrap();
        assert!((b.total_priority() - (1..=7).sum::<i32>() as f64).abs() < 1e-9);
    }
}
