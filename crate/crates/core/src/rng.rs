//! Deterministic RNG stream derivation.
//!
//! Every randomized unit of work (a video synthesis, one epoch's shuffle, one
//! window's augmentation, a permutation draw) gets its own ChaCha stream
//! derived from the master seed plus a string scope. Derivation is pure, so
//! results are independent of execution order and thread count, and resuming
//! mid-run reproduces exactly the streams a fresh run would use.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// 64-bit FNV-1a over a byte string. Small, stable, and good enough for
/// decorrelating named streams; not used anywhere collision resistance
/// matters beyond stream separation.
fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Final mixing step (splitmix64 finalizer) so that related scope strings do
/// not produce correlated seeds.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derive a child seed from `master` and a scope label such as
/// `"synth/video_0042"` or `"train/epoch/3/shuffle"`.
pub fn derive_seed(master: u64, scope: &str) -> u64 {
    mix(master ^ fnv1a(scope.as_bytes()))
}

/// Derive a ready-to-use RNG for the given scope.
pub fn stream(master: u64, scope: &str) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(master, scope))
}

/// Convenience for scopes with a numeric index, e.g. `stream_n(seed, "perm", i)`.
pub fn stream_n(master: u64, scope: &str, index: u64) -> ChaCha8Rng {
    stream(master, &format!("{scope}/{index}"))
}
