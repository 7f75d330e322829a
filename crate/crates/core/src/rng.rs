//! Seeded RNG streams.
//!
//! Every stochastic component takes an explicit RNG so runs are reproducible
//! from a single seed. Independent work units (dataset poses, training runs)
//! get their own ChaCha stream so sharding does not change results.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Root RNG for a seed.
pub fn seeded(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Independent stream `stream` under `seed`. Streams never overlap, so
/// per-item generation is identical no matter how work is sharded.
pub fn stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
