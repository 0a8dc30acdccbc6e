//! Counter-based direction stream.
//!
//! The coordinate updated at global iteration `j` is a pure function of
//! `(seed, n, j)`, so the multiset of directions a run executes does not
//! depend on how iterations are distributed over threads.

use std::sync::atomic::{AtomicU64, Ordering};

const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;
const ATTEMPT_MUL: u64 = 0xd1b5_4a32_d192_ed03;

/// 64-bit finalizer with full avalanche (the splitmix64 output function).
#[inline]
fn fmix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Keyed mixer: three finalizer rounds, each re-injecting the key.
///
/// `counter` and `lane` together address one 64-bit word; distinct
/// `(key, counter, lane)` triples give independent-looking words.
#[inline]
pub fn mix_word(key: u64, counter: u64, lane: u64) -> u64 {
    let k1 = fmix64(key ^ GOLDEN);
    let mut z = fmix64(counter.wrapping_mul(GOLDEN) ^ k1);
    z = fmix64(z ^ lane.wrapping_mul(ATTEMPT_MUL) ^ k1.rotate_left(23));
    fmix64(z.wrapping_add(k1.rotate_left(41)))
}

/// Uniform draw from `[0, 1)` with 53 random bits.
#[inline]
pub fn unit_f64(key: u64, counter: u64, lane: u64) -> f64 {
    (mix_word(key, counter, lane) >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Uniform integer in `[0, bound)` by rejection of the top partial range.
///
/// Lanes `lane, lane + 1, ...` are consumed until a word falls below the
/// largest multiple of `bound`.
#[inline]
pub fn uniform_below(key: u64, counter: u64, lane: u64, bound: u64) -> u64 {
    assert!(bound > 0, "empty range");
    // 2^64 mod bound, computed without overflow.
    let reject = bound.wrapping_neg() % bound;
    let zone = u64::MAX - reject;
    let mut attempt = lane;
    loop {
        let w = mix_word(key, counter, attempt);
        if w <= zone {
            return w % bound;
        }
        attempt = attempt.wrapping_add(1 << 32);
    }
}

/// i.i.d. uniform coordinate directions `d_0, d_1, ...` addressed by index.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DirectionStream {
    seed: u64,
    n: usize,
}

impl DirectionStream {
    pub fn new(seed: u64, n: usize) -> Self {
        assert!(n > 0, "direction stream over an empty coordinate set");
        DirectionStream { seed, n }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Coordinate `r` with `d_j = e^(r+1)`.
    #[inline]
    pub fn direction_at(&self, j: u64) -> usize {
        if self.n == 1 {
            return 0;
        }
        uniform_below(self.seed, j, 0, self.n as u64) as usize
    }

    pub fn iter(&self, start: u64, count: u64) -> impl Iterator<Item = usize> + '_ {
        (start..start + count).map(move |j| self.direction_at(j))
    }
}

/// Shared iteration counter realizing the global order of updates.
#[derive(Debug, Default)]
pub struct IterationCounter(AtomicU64);

impl IterationCounter {
    pub fn new() -> Self {
        IterationCounter(AtomicU64::new(0))
    }

    /// Returns the next unclaimed index. Only uniqueness is guaranteed, so
    /// the increment is relaxed.
    #[inline]
    pub fn claim_next_index(&self) -> u64 {
        self.0.fetch_add(1, Ordering::Relaxed)
    }

    pub fn claimed(&self) -> u64 {
        self.0.load(Ordering::Relaxed)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;
    use std::sync::Arc;

    #[test]
    fn deterministic_and_trivial_dimension() {
        let s = DirectionStream::new(42, 1000);
        assert_eq!(s.direction_at(12345), s.direction_at(12345));
        assert_eq!(DirectionStream::new(42, 1000), s);
        let one = DirectionStream::new(7, 1);
        assert!((0..100).all(|j| one.direction_at(j) == 0));
    }

    #[test]
    fn different_seeds_differ() {
        let a: Vec<_> = DirectionStream::new(1, 1 << 20).iter(0, 64).collect();
        let b: Vec<_> = DirectionStream::new(2, 1 << 20).iter(0, 64).collect();
        assert_ne!(a, b);
    }

    #[test]
    fn uniform_below_handles_awkward_bounds() {
        let bound = (1u64 << 63) + 1;
        for j in 0..1000 {
            assert!(uniform_below(3, j, 0, bound) < bound);
        }
        assert!((0..1000).all(|j| uniform_below(3, j, 0, 1) == 0));
    }

    #[test]
    fn counter_single_thread() {
        let c = IterationCounter::new();
        let got: Vec<u64> = (0..5).map(|_| c.claim_next_index()).collect();
        assert_eq!(got, vec![0, 1, 2, 3, 4]);
        assert_eq!(c.claimed(), 5);
    }

    #[test]
    fn counter_claims_each_index_once_across_threads() {
        let c = Arc::new(IterationCounter::new());
        let total = 40_000u64;
        let handles: Vec<_> = (0..4)
            .map(|_| {
                let c = Arc::clone(&c);
                std::thread::spawn(move || {
                    let mut mine = Vec::new();
                    loop {
                        let j = c.claim_next_index();
                        if j >= total {
                            break;
                        }
                        mine.push(j);
                    }
                    mine
                })
            })
            .collect();
        let mut all = HashSet::new();
        let mut count = 0;
        for h in handles {
            for j in h.join().unwrap() {
                assert!(all.insert(j));
                count += 1;
            }
        }
        assert_eq!(count, total);
        assert!((0..total).all(|j| all.contains(&j)));
    }
}
