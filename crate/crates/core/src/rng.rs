//! Counter-based random streams: one ChaCha8 stream per (experiment seed,
//! walk index), so results never depend on how walks are sharded.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Stream = ChaCha8Rng;

/// The independent stream for walk `index` of the experiment seeded by `seed`.
pub fn stream(seed: u64, index: u64) -> Stream {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}
