//! Seeded random number generation.
//!
//! Every random draw in the crate goes through ChaCha8, so a seed reproduces
//! the same stream on every platform.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type AuditRng = ChaCha8Rng;

pub fn seeded_rng(seed: u64) -> AuditRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Independent stream `stream` of the generator keyed by `seed`.
///
/// Streams are addressed by counter, so adding repetitions to an experiment
/// never changes the draws of earlier ones.
pub fn derived_rng(seed: u64, stream: u64) -> AuditRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
