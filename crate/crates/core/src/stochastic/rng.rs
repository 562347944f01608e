//! Reproducible random-number streams.
//!
//! A stream is identified by `(seed, stream_id)`. The generator is ChaCha8,
//! which is counter based: the seed selects the key, the stream id selects the
//! nonce, so streams with different ids never overlap and can be handed to
//! parallel replications in any order.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

const UNIT: f64 = 1.0 / (1u64 << 53) as f64;

#[derive(Clone, Debug)]
pub struct RngStream {
    seed: u64,
    stream_id: u64,
    inner: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream_id);
        Self { seed, stream_id, inner }
    }

    /// Stream for replication `rep` of the model identified by `model_tag`.
    pub fn for_replication(seed: u64, model_tag: u32, rep: u32) -> Self {
        Self::new(seed, (u64::from(model_tag) << 32) | u64::from(rep))
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    /// Fresh stream with the same identity, positioned at the start.
    pub fn restart(&self) -> Self {
        Self::new(self.seed, self.stream_id)
    }

    /// Independent child stream, keyed by `(self.stream_id, k)`.
    pub fn substream(&self, k: u64) -> Self {
        let id = splitmix64(self.stream_id ^ splitmix64(k.wrapping_add(0x5851_f42d_4c95_7f2d)));
        Self::new(self.seed, id)
    }

    /// Uniform on [0, 1) with 53 random bits.
    pub fn uniform(&mut self) -> f64 {
        (self.inner.next_u64() >> 11) as f64 * UNIT
    }

    /// Uniform on the open interval (0, 1); safe to feed into `ln`.
    pub fn open_uniform(&mut self) -> f64 {
        ((self.inner.next_u64() >> 11) as f64 + 0.5) * UNIT
    }

    pub fn coin(&mut self) -> bool {
        self.inner.next_u64() >> 63 == 1
    }

    /// Exponential variate with the given rate, by inversion.
    pub fn exponential(&mut self, rate: f64) -> f64 {
        -self.open_uniform().ln() / rate
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.inner.fill_bytes(dst)
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_identity_same_sequence() {
        let mut a = RngStream::new(42, 7);
        let mut b = RngStream::new(42, 7);
        for _ in 0..1000 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
    }

    const PINNED: [u64; 3] = [7424550030962593201, 1482817706323250795, 11004592982271133285];

    #[test]
    fn known_first_values_are_pinned() {
        // Guards the cross-platform contract: a change of generator or seeding
        // would silently change every published experiment.
        let mut a = RngStream::new(1, 0);
        let first: Vec<u64> = (0..3).map(|_| a.next_u64()).collect();
        assert_eq!(first, PINNED);
    }

    #[test]
    fn distinct_streams_differ() {
        let mut a = RngStream::new(42, 0);
        let mut b = RngStream::new(42, 1);
        let same = (0..100).filter(|_| a.next_u64() == b.next_u64()).count();
        assert_eq!(same, 0);
    }

    #[test]
    fn restart_rewinds() {
        let mut a = RngStream::new(3, 9);
        let first = a.uniform();
        a.uniform();
        let mut b = a.restart();
        assert_eq!(b.uniform(), first);
    }

    #[test]
    fn uniform_ranges() {
        let mut a = RngStream::new(5, 5);
        for _ in 0..10_000 {
            let u = a.uniform();
            assert!((0.0..1.0).contains(&u));
            let v = a.open_uniform();
            assert!(v > 0.0 && v < 1.0);
        }
    }

    #[test]
    fn substreams_are_distinct_from_parent() {
        let parent = RngStream::new(11, 3);
        let mut c0 = parent.substream(0);
        let mut c1 = parent.substream(1);
        assert_ne!(c0.stream_id(), parent.stream_id());
        assert_ne!(c0.next_u64(), c1.next_u64());
    }
}
