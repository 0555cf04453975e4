use alloc::vec::Vec;

use crate::numkit::{Mat, Rng};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Transition {
    pub s: Mat,
    pub a: usize,
    pub r: f64,
    pub s_next: Mat,
    pub done: bool,
}

/// Fixed-capacity ring buffer; the oldest transition is evicted first.
#[derive(Clone, Debug, PartialEq)]
pub struct ReplayBuffer {
    capacity: usize,
    ring: Vec<Transition>,
    head: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::InvalidConfig("buffer capacity must be positive".into()));
        }
        Ok(ReplayBuffer {
            capacity,
            ring: Vec::new(),
            head: 0,
        })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.ring.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ring.is_empty()
    }

    pub fn push(&mut self, t: Transition) {
        if self.ring.len() < self.capacity {
            self.ring.push(t);
        } else {
            self.ring[self.head] = t;
            self.head = (self.head + 1) % self.capacity;
        }
    }

    /// The `i`-th oldest stored transition.
    pub fn get(&self, i: usize) -> Option<&Transition> {
        if i >= self.ring.len() {
            return None;
        }
        let at = if self.ring.len() < self.capacity { i } else { (self.head + i) % self.capacity };
        self.ring.get(at)
    }

    /// Oldest to newest.
    pub fn iter(&self) -> impl Iterator<Item = &Transition> {
        (0..self.len()).filter_map(move |i| self.get(i))
    }

    /// `b` independent uniform draws with replacement, as ages (0 = oldest).
    pub fn sample_indices(&self, rng: &mut Rng, b: usize) -> Result<Vec<usize>> {
        if self.ring.is_empty() {
            return Err(Error::EmptyBuffer);
        }
        Ok((0..b).map(|_| rng.below(self.ring.len())).collect())
    }

    /// Uniform draws with replacement; a buffer smaller than `b` simply
    /// repeats entries.
    pub fn sample_batch(&self, rng: &mut Rng, b: usize) -> Result<Vec<&Transition>> {
        let idx = self.sample_indices(rng, b)?;
        Ok(idx.into_iter().map(|i| &self.ring[i]).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::collections::VecDeque;
    use proptest::prelude::{prop_assert_eq, proptest};

    fn item(k: usize) -> Transition {
        Transition {
            s: Mat::column(&[k as f64]),
            a: 0,
            r: 0.0,
            s_next: Mat::column(&[k as f64 + 1.0]),
            done: false,
        }
    }

    fn ids(buf: &ReplayBuffer) -> Vec<usize> {
        buf.iter().map(|t| t.s.get(0, 0) as usize).collect()
    }

    #[test]
    fn ring_semantics() {
        let mut buf = ReplayBuffer::new(2).unwrap();
        assert!(buf.is_empty());
        for k in 1..=3 {
            buf.push(item(k));
        }
        assert_eq!(ids(&buf), vec![2, 3]);
        assert!(ReplayBuffer::new(0).is_err());
    }

    #[test]
    fn matches_queue_model() {
        let mut rng = Rng::new(4);
        let mut buf = ReplayBuffer::new(1000).unwrap();
        let mut model = VecDeque::new();
        for _ in 0..10_000 {
            let k = rng.below(1 << 20);
            buf.push(item(k));
            model.push_back(k);
            if model.len() > 1000 {
                model.pop_front();
            }
        }
        assert_eq!(buf.len(), 1000);
        assert_eq!(ids(&buf), model.into_iter().collect::<Vec<_>>());
    }

    proptest! {
        #[test]
        fn never_exceeds_capacity(cap in 1usize..20, n in 0usize..60) {
            let mut buf = ReplayBuffer::new(cap).unwrap();
            for k in 0..n {
                buf.push(item(k));
            }
            prop_assert_eq!(buf.len(), n.min(cap));
            let expected: Vec<usize> = (n.saturating_sub(cap)..n).collect();
            prop_assert_eq!(ids(&buf), expected);
        }
    }

    #[test]
    fn single_item_batch_repeats() {
        let mut buf = ReplayBuffer::new(4).unwrap();
        buf.push(item(7));
        let batch = buf.sample_batch(&mut Rng::new(1), 3).unwrap();
        assert_eq!(batch.len(), 3);
        assert!(batch.iter().all(|t| **t == item(7)));
        assert_eq!(ReplayBuffer::new(4).unwrap().sample_batch(&mut Rng::new(1), 1), Err(Error::EmptyBuffer));
    }

    #[test]
    fn sampling_is_uniform() {
        let mut buf = ReplayBuffer::new(10).unwrap();
        for k in 0..10 {
            buf.push(item(k));
        }
        let n = 1_000_000;
        let mut counts = [0usize; 10];
        for i in buf.sample_indices(&mut Rng::new(9), n).unwrap() {
            counts[i] += 1;
        }
        let p = 0.1;
        let se = (p * (1.0 - p) / n as f64).sqrt();
        for c in counts {
            assert!((c as f64 / n as f64 - p).abs() <= 3.0 * se, "{counts:?}");
        }
    }

    #[test]
    fn sampling_is_seeded() {
        let mut buf = ReplayBuffer::new(10).unwrap();
        for k in 0..10 {
            buf.push(item(k));
        }
        let a = buf.sample_indices(&mut Rng::new(2), 32).unwrap();
        let b = buf.sample_indices(&mut Rng::new(2), 32).unwrap();
        assert_eq!(a, b);
    }
}
