//! Deterministic random substreams.
//!
//! Every replication draws from its own ChaCha8 stream selected by
//! `(seed, stream)`, so results do not depend on how work is scheduled.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn substream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Stream index for replication `rep` of grid point `point`.
pub fn grid_stream(point: u64, rep: u64) -> u64 {
    (point << 32) | (rep & 0xffff_ffff)
}
