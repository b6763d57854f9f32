//! Deterministic seed derivation for per-gene / per-replicate RNG streams.
//!
//! Every unit of parallel work draws from its own counter-derived stream so
//! results are identical regardless of thread count or scheduling order.

use rand_chacha::ChaCha8Rng;
use rand_chacha::rand_core::SeedableRng;

fn splitmix64(state: u64) -> u64 {
    let mut z = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Fold a root seed with an ordered list of tags into a single stream seed.
pub fn derive_seed(root: u64, tags: &[u64]) -> u64 {
    let mut state = splitmix64(root ^ 0x6a09_e667_f3bc_c909);
    for &t in tags {
        state = splitmix64(state ^ splitmix64(t));
    }
    state
}

/// RNG for the stream identified by (root, tags).
pub fn stream_rng(root: u64, tags: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(root, tags))
}

/// Stable 64-bit FNV-1a hash, used to fold string labels into seeds.
pub fn label_hash(label: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in label.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}
