//! Deterministic splittable randomness.
//!
//! Every experiment draws from a [`Stream`] keyed by (seed, stream id). Substreams
//! derived from distinct ids never overlap, so parallel trials are reproducible
//! regardless of scheduling or worker count.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// SplitMix64 finalizer; bijective, avalanches all bits.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Counter-based random stream keyed by (global seed, stream id).
///
/// Two streams with the same key replay identical values; streams with
/// different ids are statistically independent.
#[derive(Clone, Debug)]
pub struct Stream {
    seed: u64,
    id: u64,
    rng: ChaCha8Rng,
}

impl Stream {
    /// Root stream for a global seed.
    pub fn new(seed: u64) -> Self {
        Self::keyed(seed, 0)
    }

    /// Stream addressed by (seed, id).
    pub fn keyed(seed: u64, id: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(id);
        Stream { seed, id, rng }
    }

    /// Child stream; children of distinct ids never collide with each other
    /// or with the parent.
    pub fn substream(&self, child: u64) -> Stream {
        Stream::keyed(self.seed, mix(self.id.wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ mix(child)))
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn id(&self) -> u64 {
        self.id
    }

    pub fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    /// Uniform in [0, 1).
    pub fn f64(&mut self) -> f64 {
        self.rng.gen::<f64>()
    }

    /// Bernoulli(p). p outside [0, 1] saturates.
    pub fn chance(&mut self, p: f64) -> bool {
        self.f64() < p
    }

    pub fn bit(&mut self) -> bool {
        self.rng.gen::<bool>()
    }

    /// Uniform in [0, n). n must be positive.
    ///
    /// Widening-multiply rejection; one draw except with probability < n/2^64,
    /// so hot loops over small ranges never stall on rerolls.
    pub fn below(&mut self, n: u64) -> u64 {
        assert!(n > 0, "below(0) is empty");
        let mut m = self.rng.next_u64() as u128 * n as u128;
        if (m as u64) < n {
            let threshold = n.wrapping_neg() % n;
            while (m as u64) < threshold {
                m = self.rng.next_u64() as u128 * n as u128;
            }
        }
        (m >> 64) as u64
    }
}

impl RngCore for Stream {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }
    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }
    fn fill_bytes(&mut self, dest: &mut [u8]) {
        self.rng.fill_bytes(dest)
    }
    fn try_fill_bytes(&mut self, dest: &mut [u8]) -> Result<(), rand::Error> {
        self.rng.try_fill_bytes(dest)
    }
}
