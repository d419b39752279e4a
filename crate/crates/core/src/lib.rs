//! Language-action pre-training data pathway.
//!
//! Converts end-effector action chunks into templated language-actions and
//! back, curates trajectory datasets into prompt/target samples, builds the
//! block attention mask shared by the language and action experts, and ships
//! a small double-precision model that exercises the combined flow-matching
//! and cross-entropy objective with knowledge insulation.

pub mod curation;
pub mod flowtoy;
pub mod geometry;
pub mod langact;
pub mod maskgen;
pub mod rng;

/// Version tag written into every stats file and sample stream.
pub const FORMAT_VERSION: u32 = 1;

/// Default action horizon (chunk length).
pub const DEFAULT_HORIZON: usize = 16;

/// Canonical JSON text for any record this crate emits: fields in
/// declaration order, no whitespace, shortest round-trip float formatting.
pub fn to_canonical_json<T: serde::Serialize>(value: &T) -> String {
    serde_json::to_string(value).expect("records contain only string keys")
}
