//! Seed splitting.
//!
//! Every random draw comes from a ChaCha8 stream keyed by the run seed and a
//! `(iteration, slice, block)` triple, so a given draw does not depend on how
//! many other streams were consumed before it or on the worker count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// Block tags for [`substream`].
pub mod block {
    pub const INIT: u64 = 1;
    pub const THINNED: u64 = 2;
    pub const LATENT: u64 = 3;
    pub const LAMBDA: u64 = 4;
    pub const THETA: u64 = 5;
    pub const SIMULATE: u64 = 6;
    pub const PREDICT: u64 = 7;
    pub const REPLICATE: u64 = 8;
}

#[inline]
fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// 64-bit key for a substream.
pub fn substream_key(seed: u64, iteration: u64, slice: u64, block: u64) -> u64 {
    let mut h = splitmix(seed);
    for part in [iteration, slice, block] {
        h = splitmix(h ^ splitmix(part));
    }
    h
}

pub fn substream(seed: u64, iteration: u64, slice: u64, block: u64) -> StreamRng {
    ChaCha8Rng::seed_from_u64(substream_key(seed, iteration, slice, block))
}
