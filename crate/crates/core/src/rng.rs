//! Splittable, order-independent random streams.
//!
//! A [`StreamKey`] names a position in a tree of streams. Children are
//! derived by hashing `(parent, index)`, so the stream for class 17 is the
//! same whether it is generated first, last, or on another thread. Each key
//! seeds a ChaCha8 generator, which is itself counter-based.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// The generator type handed to sampling code.
pub type Stream = ChaCha8Rng;

/// Well-known child indices used to separate independent uses of a seed.
pub mod tags {
    pub const FINGERPRINT: u64 = 0x01;
    pub const TRAIN_VARIANTS: u64 = 0x02;
    pub const SPLIT: u64 = 0x03;
    pub const INIT: u64 = 0x10;
    pub const SHUFFLE: u64 = 0x11;
    pub const BENCH: u64 = 0x20;
    pub const PLOT: u64 = 0x30;
}

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 finalizer.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct StreamKey(u64);

impl StreamKey {
    pub fn root(seed: u64) -> Self {
        StreamKey(mix64(seed.wrapping_add(GOLDEN)))
    }

    pub fn child(self, index: u64) -> Self {
        let salt = mix64(index.wrapping_mul(GOLDEN).wrapping_add(0x6A09_E667_F3BC_C909));
        StreamKey(mix64(self.0 ^ salt.rotate_left(23)))
    }

    pub fn value(self) -> u64 {
        self.0
    }

    pub fn stream(self) -> Stream {
        ChaCha8Rng::seed_from_u64(self.0)
    }
}

/// Seed of the `index`-th child of `parent`; used for per-run seeds.
pub fn child_seed(parent: u64, index: u64) -> u64 {
    StreamKey::root(parent).child(index).value()
}

/// Uniform draw in `[lo, hi)`; always consumes exactly one 64-bit word.
#[inline]
pub fn uniform<R: Rng + ?Sized>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    let u: f64 = rng.random();
    lo + (hi - lo) * u
}

/// Fisher-Yates permutation of `0..n`.
pub fn permutation<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = rng.random_range(0..=i);
        idx.swap(i, j);
    }
    idx
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn children_are_distinct_and_stable() {
        let root = StreamKey::root(42);
        let a = root.child(0);
        let b = root.child(1);
        assert_ne!(a, b);
        assert_eq!(a, StreamKey::root(42).child(0));
        assert_ne!(root.child(1).child(0), root.child(0).child(1));
    }

    #[test]
    fn stream_is_reproducible() {
        let mut s1 = StreamKey::root(7).child(3).stream();
        let mut s2 = StreamKey::root(7).child(3).stream();
        let a: Vec<u64> = (0..16).map(|_| s1.random()).collect();
        let b: Vec<u64> = (0..16).map(|_| s2.random()).collect();
        assert_eq!(a, b);
    }

    #[test]
    fn uniform_stays_in_range() {
        let mut s = StreamKey::root(1).stream();
        for _ in 0..10_000 {
            let v = uniform(&mut s, -3.0, 5.0);
            assert!((-3.0..5.0).contains(&v));
        }
        assert_eq!(uniform(&mut s, 2.0, 2.0), 2.0);
    }

    #[test]
    fn permutation_is_a_permutation() {
        let mut s = StreamKey::root(9).stream();
        let mut p = permutation(&mut s, 100);
        p.sort_unstable();
        assert_eq!(p, (0..100).collect::<Vec<_>>());
    }
}
