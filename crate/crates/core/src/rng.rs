//! Keyed deterministic random streams.
//!
//! Every random draw in curation is made from a ChaCha stream whose key is
//! derived from `(seed, episode_id, t, purpose)`, so the draw for a given
//! sample does not depend on how many other samples were processed before it
//! or on which worker processed it.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// What a stream is used for. Distinct purposes never share a key.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Purpose {
    Frame = 1,
    VqaQuestion = 2,
    Toy = 3,
    SelfCheck = 4,
}

/// 64-bit FNV-1a; stable across platforms and releases.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

pub fn keyed_rng(seed: u64, episode_id: &str, t: u64, purpose: Purpose) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[0..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&fnv1a64(episode_id.as_bytes()).to_le_bytes());
    key[16..24].copy_from_slice(&t.to_le_bytes());
    key[24..32].copy_from_slice(&(purpose as u64).to_le_bytes());
    ChaCha8Rng::from_seed(key)
}
