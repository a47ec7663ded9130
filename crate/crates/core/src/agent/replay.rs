use rand::Rng;

/// One environment transition `(s, a, r, s', terminal)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Transition<T> {
    pub state: Vec<T>,
    pub action: usize,
    pub reward: T,
    pub next_state: Vec<T>,
    pub terminal: bool,
}

/// Fixed-capacity FIFO ring of transitions with uniform sampling.
#[derive(Clone, Debug)]
pub struct ReplayBuffer<T> {
    capacity: usize,
    storage: Vec<Transition<T>>,
    write_cursor: usize,
}

impl<T: Clone> ReplayBuffer<T> {
    /// Panics if `capacity == 0`.
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        Self {
            capacity,
            storage: Vec::with_capacity(capacity.min(1 << 16)),
            write_cursor: 0,
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.storage.len()
    }

    pub fn is_empty(&self) -> bool {
        self.storage.is_empty()
    }

    /// Appends, overwriting the oldest transition once full.
    pub fn push(&mut self, transition: Transition<T>) {
        if self.storage.len() < self.capacity {
            self.storage.push(transition);
        } else {
            self.storage[self.write_cursor] = transition;
        }
        self.write_cursor = (self.write_cursor + 1) % self.capacity;
    }

    pub fn get(&self, index: usize) -> Option<&Transition<T>> {
        self.storage.get(index)
    }

    /// Uniform indices drawn with replacement. Empty if the buffer is empty.
    pub fn sample_indices<R: Rng + ?Sized>(&self, batch: usize, rng: &mut R) -> Vec<usize> {
        if self.storage.is_empty() {
            return Vec::new();
        }
        (0..batch).map(|_| rng.random_range(0..self.storage.len())).collect()
    }

    pub fn sample<R: Rng + ?Sized>(&self, batch: usize, rng: &mut R) -> Vec<&Transition<T>> {
        self.sample_indices(batch, rng).into_iter().map(|i| &self.storage[i]).collect()
    }

    /// Stored transitions from oldest to newest.
    pub fn iter_oldest_first(&self) -> impl Iterator<Item = &Transition<T>> {
        let split = if self.storage.len() < self.capacity { 0 } else { self.write_cursor };
        self.storage[split..].iter().chain(self.storage[..split].iter())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tr(i: usize) -> Transition<f64> {
        Transition {
            state: vec![i as f64],
            action: i % 3,
            reward: -1.0,
            next_state: vec![i as f64 + 1.0],
            terminal: false,
        }
    }

    proptest! {
        #[test]
        fn fifo_keeps_most_recent(capacity in 1usize..40, extra in 0usize..100) {
            let mut buf = ReplayBuffer::new(capacity);
            let total = capacity + extra;
            for i in 0..total {
                buf.push(tr(i));
                prop_assert!(buf.len() <= capacity);
            }
            let kept: Vec<usize> = buf.iter_oldest_first().map(|t| t.state[0] as usize).collect();
            let expected: Vec<usize> = (total - capacity..total).collect();
            prop_assert_eq!(kept, expected);
        }
    }

    #[test]
    fn partial_fill_order() {
        let mut buf = ReplayBuffer::new(10);
        for i in 0..4 {
            buf.push(tr(i));
        }
        let kept: Vec<f64> = buf.iter_oldest_first().map(|t| t.state[0]).collect();
        assert_eq!(kept, vec![0.0, 1.0, 2.0, 3.0]);
    }

    #[test]
    fn sampling_is_uniform_over_stored() {
        let mut buf = ReplayBuffer::new(4);
        for i in 0..6 {
            buf.push(tr(i));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let draws = 40_000;
        let mut counts = [0usize; 6];
        for t in buf.sample(draws, &mut rng) {
            counts[t.state[0] as usize] += 1;
        }
        assert_eq!(counts[0] + counts[1], 0);
        let p = 0.25;
        let sd = (draws as f64 * p * (1.0 - p)).sqrt();
        for &c in &counts[2..] {
            assert!((c as f64 - draws as f64 * p).abs() < 4.0 * sd);
        }
    }

    #[test]
    fn empty_buffer_samples_nothing() {
        let buf: ReplayBuffer<f64> = ReplayBuffer::new(3);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(buf.sample(5, &mut rng).is_empty());
    }
}
