//! Named, independent random streams.
//!
//! Every consumer of randomness draws from its own ChaCha stream keyed by
//! `(seed, stream)`, so toggling one behaviour (for example the adversarial
//! schedule) never shifts the numbers seen by another (initialization,
//! shuffling, data generation).

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Init = 1,
    Shuffle = 2,
    Schedule = 3,
    Synth = 4,
    Split = 5,
    Jitter = 6,
    MockText = 7,
    MockEmbed = 8,
}

pub fn stream_rng(seed: u64, stream: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream as u64);
    rng
}

/// Stream for a sub-task (an epoch, a class) of a named stream.
pub fn substream_rng(seed: u64, stream: Stream, index: u64) -> ChaCha8Rng {
    stream_rng(splitmix64(seed ^ splitmix64(index.wrapping_add(0x5851_f42d_4c95_7f2d))), stream)
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// 64-bit FNV-1a over raw bytes.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const PRIME: u64 = 0x0000_0100_0000_01b3;
    bytes.iter().fold(OFFSET, |h, &b| (h ^ u64::from(b)).wrapping_mul(PRIME))
}
