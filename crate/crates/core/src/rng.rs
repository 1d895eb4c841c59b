//! Per-run random streams.
//!
//! Every Monte-Carlo run owns a ChaCha8 stream. The key is derived from the
//! master seed and the run index selects the ChaCha stream id, so run `i`
//! draws the same numbers no matter which worker executes it or how many
//! workers exist.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Stream = ChaCha8Rng;

/// Stream for run `run_index` under `master_seed`.
pub fn run_stream(master_seed: u64, run_index: u64) -> Stream {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(run_index);
    rng
}
