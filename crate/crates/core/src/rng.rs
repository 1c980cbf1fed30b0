//! Seed derivation for the independent random streams.
//!
//! Every stream is keyed on `(master seed, stream, slot, index)` only, so the
//! channel and request draws a run sees never depend on which algorithm is
//! being simulated.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Channel = 1,
    Task = 2,
    Gibbs = 3,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn derive_seed(master: u64, stream: Stream, slot: u64, index: u64) -> u64 {
    let mut h = splitmix64(master);
    h = splitmix64(h ^ (stream as u64));
    h = splitmix64(h ^ slot);
    splitmix64(h ^ index)
}

pub fn stream_rng(master: u64, stream: Stream, slot: u64, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(master, stream, slot, index))
}
