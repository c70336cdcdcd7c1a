//! Reproducible random streams.
//!
//! Every Monte Carlo routine derives its generators from a `(seed, stream)`
//! pair. Work is split into fixed-size chunks and chunk `i` always uses
//! stream `i`, so results do not depend on how many threads run them.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// Samples handled by one stream in chunked Monte Carlo loops.
pub const CHUNK: usize = 4096;

/// Independent generator number `stream` for `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Seed for replicate `index` of an experiment seeded with `seed` (SplitMix64 mixing).
pub fn replicate_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Splits `total` items into `(stream, count)` chunks of at most [`CHUNK`].
pub(crate) fn chunks(total: usize) -> Vec<(u64, usize)> {
    (0..total.div_ceil(CHUNK))
        .map(|i| (i as u64, CHUNK.min(total - i * CHUNK)))
        .collect()
}
