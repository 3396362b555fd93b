//! Fixed-capacity experience replay.

use rand::Rng;
use serde::{Deserialize, Serialize};

/// Ring buffer keeping the latest `capacity` items.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayBuffer<X> {
    capacity: usize,
    items: Vec<X>,
    /// Slot the next push overwrites once full.
    head: usize,
}

impl<X> ReplayBuffer<X> {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        ReplayBuffer {
            capacity,
            items: Vec::with_capacity(capacity.min(1 << 16)),
            head: 0,
        }
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

    pub fn push(&mut self, item: X) {
        if self.items.len() < self.capacity {
            self.items.push(item);
        } else {
            self.items[self.head] = item;
            self.head = (self.head + 1) % self.capacity;
        }
    }

    /// Items from oldest to newest.
    pub fn iter(&self) -> impl Iterator<Item = &X> {
        let (newer, older) = self.items.split_at(self.head);
        older.iter().chain(newer)
    }

    /// `n` uniform draws with replacement.
    pub fn sample<'a, R: Rng + ?Sized>(&'a self, n: usize, rng: &mut R) -> Vec<&'a X> {
        if self.items.is_empty() {
            return Vec::new();
        }
        (0..n).map(|_| &self.items[rng.gen_range(0..self.items.len())]).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn evicts_oldest_first() {
        let mut b = ReplayBuffer::new(3);
        for i in 0..5 {
            b.push(i);
            assert!(b.len() <= 3);
        }
        assert_eq!(b.iter().copied().collect::<Vec<_>>(), vec![2, 3, 4]);
        b.push(5);
        assert_eq!(b.iter().copied().collect::<Vec<_>>(), vec![3, 4, 5]);
    }

    #[test]
    fn sampling_stays_in_buffer() {
        let mut b = ReplayBuffer::new(4);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(b.sample(3, &mut rng).is_empty());
        for i in 0..10 {
            b.push(i);
        }
        let s = b.sample(100, &mut rng);
        assert_eq!(s.len(), 100);
        assert!(s.iter().all(|&&x| (6..10).contains(&x)));
    }
}
