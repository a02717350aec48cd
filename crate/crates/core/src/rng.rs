//! Counter-based random streams.
//!
//! Every `(walker, step)` pair owns an independent ChaCha8 keystream
//! position: the seed picks the key, the walker picks the stream and the
//! step picks a block offset. Draws therefore never depend on the order in
//! which walkers are processed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Words reserved per `(walker, step)` slot; far more than one step consumes.
const WORDS_PER_STEP_LOG2: u32 = 20;

/// Step index reserved for drawing initial positions.
pub const INIT_STEP: u64 = u64::MAX;

#[derive(Debug, Clone)]
pub struct WalkerStreams {
    seed: u64,
    base: ChaCha8Rng,
}

impl WalkerStreams {
    pub fn new(seed: u64) -> Self {
        Self { seed, base: ChaCha8Rng::seed_from_u64(seed) }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Generator positioned at the start of the `(walker, step)` slot.
    pub fn rng(&self, walker: u64, step: u64) -> ChaCha8Rng {
        let mut rng = self.base.clone();
        rng.set_stream(walker);
        rng.set_word_pos((step as u128) << WORDS_PER_STEP_LOG2);
        rng
    }
}
