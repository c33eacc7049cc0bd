//! Deterministic hierarchical RNG streams.
//!
//! Every random consumer in a run gets its own ChaCha8 stream keyed by
//! `(master_seed, trial, kind, sub)`. The 256-bit ChaCha key holds the four
//! words directly, so distinct tuples give independent streams with no
//! collision hashing involved. Adding or removing a policy therefore never
//! perturbs the draws seen by any other policy, and trials can run on any
//! number of workers without changing results.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream namespaces. `sub` disambiguates within a kind.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StreamKind {
    /// Ground-truth process noise; `sub` = target index.
    Truth,
    /// Warm-start SINR observations; `sub` = policy name hash.
    WarmStart,
    /// Per-step measurement + SINR observation noise; `sub` = policy name hash.
    Observation,
    /// Policy-internal randomness (BPSO, ε-greedy); `sub` = policy name hash.
    Policy,
}

impl StreamKind {
    fn tag(self) -> u64 {
        match self {
            StreamKind::Truth => 0,
            StreamKind::WarmStart => 1,
            StreamKind::Observation => 2,
            StreamKind::Policy => 3,
        }
    }
}

/// Derives the stream for `(master_seed, trial, kind, sub)`.
pub fn stream(master_seed: u64, trial: u64, kind: StreamKind, sub: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[0..8].copy_from_slice(&master_seed.to_le_bytes());
    key[8..16].copy_from_slice(&trial.to_le_bytes());
    key[16..24].copy_from_slice(&kind.tag().to_le_bytes());
    key[24..32].copy_from_slice(&sub.to_le_bytes());
    ChaCha8Rng::from_seed(key)
}

/// FNV-1a over the policy name; stable across platforms and runs.
pub fn name_tag(name: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in name.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}
