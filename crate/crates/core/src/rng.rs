//! Reproducible random streams.
//!
//! Every logical task (replica, mode, purpose) owns its own ChaCha stream
//! derived from the run seed, so results never depend on scheduling order
//! or on the number of worker threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// Purpose tags keep streams for different consumers disjoint.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum Purpose {
    Field = 1,
    Proposal = 2,
    Accept = 3,
    Brownian = 4,
    Pairs = 5,
    Tilted = 6,
    Misc = 7,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Stream id for a (purpose, replica, mode) triple.
pub fn stream_id(purpose: Purpose, replica: u64, mode: u64) -> u64 {
    let h = splitmix64((purpose as u64) << 56 ^ splitmix64(replica));
    splitmix64(h ^ mode.wrapping_mul(0xD6E8_FEB8_6659_FD93))
}

pub fn stream(seed: u64, id: u64) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

pub fn task_rng(seed: u64, purpose: Purpose, replica: u64, mode: u64) -> StreamRng {
    stream(seed, stream_id(purpose, replica, mode))
}
