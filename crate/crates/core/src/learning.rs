//! Pieces shared by every tabular learner in the crate.

use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hyper {
    pub alpha: f64,
    pub gamma: f64,
    pub epsilon: f64,
}

impl Default for Hyper {
    fn default() -> Self {
        Hyper {
            alpha: 0.1,
            gamma: 0.99,
            epsilon: 0.1,
        }
    }
}

/// Index of the first maximum.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Epsilon-greedy pick over `values`. Always consumes one uniform draw, plus a
/// second one when exploring, so two learners fed the same values and the
/// same rng stream make the same choices.
pub fn epsilon_greedy<R: Rng + ?Sized>(rng: &mut R, epsilon: f64, values: &[f64]) -> usize {
    debug_assert!(!values.is_empty());
    if rng.gen::<f64>() < epsilon {
        rng.gen_range(0..values.len())
    } else {
        argmax(values)
    }
}

/// One-step blend `(1 - alpha) * q + alpha * target`.
#[inline]
pub fn blend(q: f64, alpha: f64, target: f64) -> f64 {
    (1.0 - alpha) * q + alpha * target
}

/// `gamma^tau` by repeated multiplication, matching how discounts are
/// accumulated during a walk.
pub fn discount_pow(gamma: f64, tau: u32) -> f64 {
    let mut d = 1.0;
    for _ in 0..tau {
        d *= gamma;
    }
    d
}

/// Derives an independent seed for work item `index` of stage `tag`, so that
/// results do not depend on how items are scheduled.
pub fn derive_seed(master: u64, tag: &str, index: u64) -> u64 {
    let mut h = fnv1a(tag.as_bytes()) ^ master.rotate_left(17);
    h ^= index.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    splitmix64(h)
}

pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;

    #[test]
    fn argmax_prefers_lowest_index_on_ties() {
        assert_eq!(argmax(&[0.0, 0.0, 0.0]), 0);
        assert_eq!(argmax(&[-1.0, 2.0, 2.0]), 1);
    }

    #[test]
    fn greedy_when_epsilon_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            assert_eq!(epsilon_greedy(&mut rng, 0.0, &[0.0, 3.0, 1.0]), 1);
        }
    }

    #[test]
    fn derived_seeds_differ_by_tag_and_index() {
        let a = derive_seed(0, "prune", 0);
        assert_ne!(a, derive_seed(0, "prune", 1));
        assert_ne!(a, derive_seed(0, "search", 0));
        assert_ne!(a, derive_seed(1, "prune", 0));
        assert_eq!(a, derive_seed(0, "prune", 0));
    }

    #[test]
    fn discount_pow_matches_powi_at_one() {
        assert_eq!(discount_pow(0.99, 1), 0.99);
        assert_eq!(discount_pow(0.5, 3), 0.125);
        assert_eq!(discount_pow(0.7, 0), 1.0);
    }
}
