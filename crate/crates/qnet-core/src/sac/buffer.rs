use rand::Rng;

use super::nstep::Transition;

/// Uniform-replay ring buffer. Once full, the oldest transition is
/// overwritten first.
#[derive(Debug)]
pub struct ReplayBuffer {
    capacity: usize,
    data: Vec<Transition>,
    write: usize,
    total_pushed: u64,
}

impl ReplayBuffer {
    pub const DEFAULT_CAPACITY: usize = 1_000_000;

    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0);
        ReplayBuffer {
            capacity,
            data: Vec::new(),
            write: 0,
            total_pushed: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn total_pushed(&self) -> u64 {
        self.total_pushed
    }

    pub fn get(&self, i: usize) -> &Transition {
        &self.data[i]
    }

    pub fn push(&mut self, t: Transition) {
        self.total_pushed += 1;
        if self.data.len() < self.capacity {
            self.data.push(t);
        } else {
            self.data[self.write] = t;
            self.write = (self.write + 1) % self.capacity;
        }
    }

    /// Uniform sample with replacement, cloned out so the buffer lock can be
    /// released before the gradient work starts.
    pub fn sample_owned(&self, rng: &mut impl Rng, batch: usize) -> Vec<Transition> {
        (0..batch)
            .map(|_| self.data[rng.gen_range(0..self.data.len())].clone())
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::Action;

    fn t(tag: f64) -> Transition {
        Transition {
            obs: vec![tag],
            action: Action::DontQuery,
            n_step_return: 0.0,
            obs_after_n: vec![tag],
            n_used: 1,
            discount_to_bootstrap: 0.9,
            terminal: false,
        }
    }

    #[test]
    fn never_exceeds_capacity_and_evicts_oldest() {
        let mut b = ReplayBuffer::new(4);
        for i in 0..10 {
            b.push(t(i as f64));
            assert!(b.len() <= 4);
        }
        let held: Vec<f64> = (0..b.len()).map(|i| b.get(i).obs[0]).collect();
        // 0..3 filled the buffer; 4..9 overwrote slots 0,1,2,3,0,1.
        for old in 0..4 {
            assert!(
                !held.contains(&(old as f64)),
                "oldest entries must be gone, found {old} in {held:?}"
            );
        }
        assert_eq!(b.total_pushed(), 10);
    }

    #[test]
    fn sampling_is_uniform_chi_squared() {
        let mut b = ReplayBuffer::new(64);
        for i in 0..64 {
            b.push(t(i as f64));
        }
        let mut rng = crate::rng::stream(11, crate::rng::STREAM_BUFFER);
        let draws = 64_000usize;
        let mut counts = [0u64; 64];
        for tr in b.sample_owned(&mut rng, draws) {
            counts[tr.obs[0] as usize] += 1;
        }
        let expected = draws as f64 / 64.0;
        let chi2: f64 = counts
            .iter()
            .map(|&c| {
                let d = c as f64 - expected;
                d * d / expected
            })
            .sum();
        // 63 degrees of freedom; the 0.999 quantile is ~103.4.
        assert!(chi2 < 103.4, "chi-squared statistic {chi2} too large");
    }
}
