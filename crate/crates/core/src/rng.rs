//! Counter-based pseudo-random generator.
//!
//! Draws are pure functions of `(seed, counter)` through a SplitMix64
//! finalizer, so trajectories are reproducible bit-for-bit given a seed and
//! independent streams are obtained by seed offsets. The sampling order of
//! the simulator is: action draw (when the agent randomizes), then state
//! draw, then reward draw.

#[derive(Clone, Debug)]
pub struct CounterRng {
    seed: u64,
    counter: u64,
}

fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9e3779b97f4a7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

impl CounterRng {
    pub fn new(seed: u64) -> Self {
        CounterRng { seed, counter: 0 }
    }

    /// Derive an independent stream, e.g. one per Monte-Carlo replicate.
    pub fn substream(seed: u64, index: u64) -> Self {
        CounterRng::new(splitmix64(seed ^ index.wrapping_mul(0xd1342543de82ef95)))
    }

    pub fn next_u64(&mut self) -> u64 {
        let v = splitmix64(self.seed.wrapping_add(self.counter.wrapping_mul(0xa0761d6478bd642f)));
        self.counter = self.counter.wrapping_add(1);
        v
    }

    /// Uniform draw in `[0, 1)` with 53 bits of precision.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform index in `0..n`, `n >= 1`.
    pub fn next_index(&mut self, n: usize) -> usize {
        debug_assert!(n >= 1);
        let u = self.next_f64();
        ((u * n as f64) as usize).min(n - 1)
    }

    /// Standard normal via Box-Muller; consumes two uniforms.
    pub fn next_gaussian(&mut self) -> f64 {
        let u1 = self.next_f64().max(f64::MIN_POSITIVE);
        let u2 = self.next_f64();
        (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
    }

    /// Sample an index from a probability vector (entries sum to ~1).
    pub fn next_categorical(&mut self, probs: &[f64]) -> usize {
        let u = self.next_f64();
        let mut acc = 0.0;
        for (i, &p) in probs.iter().enumerate() {
            acc += p;
            if u < acc {
                return i;
            }
        }
        // Guard against rounding in the cumulative sum.
        probs.len() - 1
    }
}
