//! Seed streams.
//!
//! Every random quantity is drawn from a ChaCha stream keyed by one master
//! seed and addressed by a counter, so results do not depend on how work is
//! scheduled across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Master seed plus a purpose tag; hands out independent per-index streams.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SeedStream {
    master: u64,
    tag: u64,
}

impl SeedStream {
    pub fn new(master: u64) -> Self {
        SeedStream { master, tag: 0 }
    }

    /// A sibling stream for a different purpose (source, channel, Monte-Carlo...).
    pub fn fork(&self, tag: u64) -> Self {
        SeedStream {
            master: self.master,
            tag: splitmix(self.tag ^ splitmix(tag.wrapping_add(0x9E37_79B9_7F4A_7C15))),
        }
    }

    pub fn master(&self) -> u64 {
        self.master
    }

    /// Generator for item `index` of this stream.
    pub fn rng(&self, index: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.master ^ self.tag);
        rng.set_stream(index);
        rng
    }
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let s = SeedStream::new(7);
        let a: u64 = s.rng(3).random();
        let b: u64 = s.rng(3).random();
        let c: u64 = s.rng(4).random();
        let d: u64 = s.fork(1).rng(3).random();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_ne!(a, d);
    }
}
