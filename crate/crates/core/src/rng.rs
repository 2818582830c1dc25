//! Seeded random streams.
//!
//! Every randomized operation takes an explicit generator. Independent work
//! items (frames, epochs, sweep levels) draw from their own ChaCha stream so
//! results do not depend on evaluation order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SeededRng = ChaCha8Rng;

/// Stream namespaces. The low 40 bits of a stream id carry the item index.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Domain {
    Trajectory = 1,
    Body = 2,
    Render = 3,
    Calibration = 4,
    Init = 5,
    Epoch = 6,
    Shuffle = 7,
    TestPairs = 8,
    Predict = 9,
    CameraOffset = 10,
    KeypointNoise = 11,
    GradCheck = 12,
}

pub fn seeded(seed: u64) -> SeededRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Generator for item `index` within `domain`, fully determined by `seed`.
pub fn substream(seed: u64, domain: Domain, index: u64) -> SeededRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((domain as u64) << 40) | (index & ((1 << 40) - 1)));
    rng
}
