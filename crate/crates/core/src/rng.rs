//! Seeded random streams.
//!
//! All randomness flows from a single `u64` master seed. Independent
//! sub-streams (one per Monte Carlo worker, one per sweep grid point, ...)
//! are derived in one of two ways:
//!
//! * [`worker_rng`]: ChaCha8 keyed by the master seed, with the ChaCha
//!   stream id set to the worker index. Streams never overlap.
//! * [`derive_seed`]: a SplitMix64 fold of the master seed with a list of
//!   integer tags, used to key whole experiments (e.g. the kernel for a
//!   given `ℓ`).

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

pub fn rng_from_seed(seed: u64) -> SimRng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn worker_rng(master: u64, worker: u64) -> SimRng {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(worker);
    rng
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn derive_seed(master: u64, tags: &[u64]) -> u64 {
    tags.iter()
        .fold(splitmix64(master), |acc, &t| splitmix64(acc ^ splitmix64(t)))
}
