//! Counter-based random streams.
//!
//! Every random quantity in a run is a deterministic function of
//! `(master seed, stream index, position in stream)`. ChaCha is a counter
//! based generator: the key comes from the master seed, the 64-bit stream id
//! selects an independent keystream and the word position is the counter.
//! Replica `r` of a run always reads stream `r`, whichever worker executes it.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Streams at or above this index are reserved for auxiliary draws (source
/// patterns, permutations shared by all replicas and so on).
pub const AUX_STREAM_BASE: u64 = 1 << 63;

#[derive(Clone, Debug)]
pub struct StreamRng {
    inner: ChaCha8Rng,
    seed: u64,
    stream: u64,
}

impl StreamRng {
    pub fn new(master_seed: u64, stream: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(master_seed);
        inner.set_stream(stream);
        StreamRng {
            inner,
            seed: master_seed,
            stream,
        }
    }

    /// Auxiliary stream `k` of the same master seed.
    pub fn aux(master_seed: u64, k: u64) -> Self {
        Self::new(master_seed, AUX_STREAM_BASE + k)
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }

    /// Number of 32-bit words consumed so far.
    pub fn word_pos(&self) -> u128 {
        self.inner.get_word_pos()
    }

    /// A child generator for sub-task `k`, derived only from this stream's
    /// identity and `k` (not from how much of the stream was consumed).
    pub fn child(&self, k: u64) -> Self {
        let mixed = splitmix(self.seed ^ splitmix(self.stream.wrapping_add(0x9e37_79b9)));
        Self::new(mixed, k)
    }

    /// Uniform draw in `[0, 1)` with 53 bits of precision.
    pub fn uniform(&mut self) -> f64 {
        (self.inner.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform integer in `0..n`.
    pub fn below(&mut self, n: u64) -> u64 {
        assert!(n > 0);
        // Lemire's nearly divisionless method with rejection.
        let mut m = (self.inner.next_u64() as u128) * (n as u128);
        if (m as u64) < n {
            let t = n.wrapping_neg() % n;
            while (m as u64) < t {
                m = (self.inner.next_u64() as u128) * (n as u128);
            }
        }
        (m >> 64) as u64
    }

    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.uniform() < p
    }

    /// Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i as u64 + 1) as usize;
            items.swap(i, j);
        }
    }
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

impl RngCore for StreamRng {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dest: &mut [u8]) {
        self.inner.fill_bytes(dest)
    }

    fn try_fill_bytes(&mut self, dest: &mut [u8]) -> Result<(), rand::Error> {
        self.inner.try_fill_bytes(dest)
    }
}
