//! Seeded random streams.
//!
//! Every stochastic operation takes a caller-owned stream. Independent
//! sub-streams (per record, per candidate, per UE) are derived from a base
//! seed with [`derive_seed`] so that results never depend on evaluation
//! order or thread count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

pub fn seeded(seed: u64) -> SimRng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn fnv1a(label: &str) -> u64 {
    label.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01B3)
    })
}

/// Derives a child seed from `base`, a purpose label and an index.
pub fn derive_seed(base: u64, label: &str, index: u64) -> u64 {
    splitmix64(splitmix64(base ^ fnv1a(label)).wrapping_add(splitmix64(index)))
}

pub fn derived(base: u64, label: &str, index: u64) -> SimRng {
    seeded(derive_seed(base, label, index))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn derived_streams_are_stable_and_distinct() {
        assert_eq!(derive_seed(7, "ue", 3), derive_seed(7, "ue", 3));
        assert_ne!(derive_seed(7, "ue", 3), derive_seed(7, "ue", 4));
        assert_ne!(derive_seed(7, "ue", 3), derive_seed(7, "pkt", 3));
        let a: u64 = derived(1, "x", 0).random();
        let b: u64 = derived(1, "x", 0).random();
        assert_eq!(a, b);
    }
}
