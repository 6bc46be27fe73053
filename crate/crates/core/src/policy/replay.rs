//! Fixed-capacity ring buffer with uniform sampling.

use rand::Rng;

use super::PolicyError;

#[derive(Debug, Clone)]
pub struct ReplayBuffer<T> {
    capacity: usize,
    items: Vec<T>,
    /// Slot that the next push overwrites once the buffer is full.
    cursor: usize,
    pushed: u64,
}

impl<T> ReplayBuffer<T> {
    pub fn new(capacity: usize) -> Result<Self, PolicyError> {
        if capacity == 0 {
            return Err(PolicyError::Hyperparameter("replay capacity must be >= 1".into()));
        }
        Ok(Self {
            capacity,
            items: Vec::new(),
            cursor: 0,
            pushed: 0,
        })
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

    /// Total number of pushes, including overwritten items.
    pub fn total_pushed(&self) -> u64 {
        self.pushed
    }

    pub fn push(&mut self, item: T) {
        if self.items.len() < self.capacity {
            self.items.push(item);
        } else {
            self.items[self.cursor] = item;
        }
        self.cursor = (self.cursor + 1) % self.capacity;
        self.pushed += 1;
    }

    pub fn get(&self, index: usize) -> Option<&T> {
        self.items.get(index)
    }

    pub fn iter(&self) -> impl Iterator<Item = &T> {
        self.items.iter()
    }

    /// Indices drawn uniformly with replacement.
    pub fn sample_indices<R: Rng + ?Sized>(&self, batch: usize, rng: &mut R) -> Result<Vec<usize>, PolicyError> {
        if self.items.len() < batch || self.items.is_empty() {
            return Err(PolicyError::InsufficientSamples {
                available: self.items.len(),
                requested: batch,
            });
        }
        Ok((0..batch).map(|_| rng.gen_range(0..self.items.len())).collect())
    }

    pub fn sample<R: Rng + ?Sized>(&self, batch: usize, rng: &mut R) -> Result<Vec<&T>, PolicyError> {
        Ok(self
            .sample_indices(batch, rng)?
            .into_iter()
            .map(|i| &self.items[i])
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_capacity_rejected() {
        assert!(ReplayBuffer::<u32>::new(0).is_err());
    }

    #[test]
    fn sampling_more_than_stored_fails() {
        let mut b = ReplayBuffer::new(10).unwrap();
        b.push(1);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(
            b.sample(2, &mut rng).unwrap_err(),
            PolicyError::InsufficientSamples { available: 1, requested: 2 }
        );
    }

    proptest! {
        #[test]
        fn overflow_keeps_the_newest(capacity in 1usize..50, extra in 0usize..120) {
            let mut b = ReplayBuffer::new(capacity).unwrap();
            let n = capacity + extra;
            for i in 0..n {
                b.push(i);
            }
            prop_assert_eq!(b.len(), capacity);
            let mut held: Vec<usize> = b.iter().copied().collect();
            held.sort_unstable();
            let expected: Vec<usize> = (n - capacity..n).collect();
            prop_assert_eq!(held, expected);
        }
    }

    #[test]
    fn sampling_is_uniform() {
        let n = 20;
        let mut b = ReplayBuffer::new(n).unwrap();
        for i in 0..n {
            b.push(i);
        }
        let draws = 100_000;
        let mut counts = vec![0usize; n];
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..draws / n {
            for i in b.sample_indices(n, &mut rng).unwrap() {
                counts[i] += 1;
            }
        }
        let p = 1.0 / n as f64;
        let mean = draws as f64 * p;
        let sd = (draws as f64 * p * (1.0 - p)).sqrt();
        for c in counts {
            assert!((c as f64 - mean).abs() < 5.0 * sd, "count {c} vs {mean}");
        }
    }
}
