//! Counter-based random streams.
//!
//! Every consumer of randomness derives its own ChaCha stream from the master
//! seed, a domain tag and a `(major, minor)` counter, usually
//! `(epoch, batch)`. Streams never share state, so batches can be processed in
//! any order with identical results.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Domain {
    Split = 0x5350_4c49,
    Batching = 0x4241_5443,
    Init = 0x494e_4954,
    Selection = 0x5345_4c45,
    RandomFilter = 0x524e_4446,
    Probe = 0x5052_4f42,
}

/// Stream id for a `(major, minor)` counter pair.
pub fn stream_id(major: u64, minor: u64) -> u64 {
    (major << 32) ^ (minor & 0xffff_ffff)
}

pub fn stream(seed: u64, domain: Domain, major: u64, minor: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (domain as u64).rotate_left(29));
    rng.set_stream(stream_id(major, minor));
    rng
}
