//! Seeded, platform-independent random streams.
//!
//! Every random decision in the crate is drawn from a ChaCha stream whose key is
//! derived from a 64-bit run seed and a `(epoch, step, replicate)` triple. Two
//! consumers holding different keys never share state, so work split across
//! threads produces the same numbers regardless of scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

/// The generator handed out by [`RandomSource`].
pub type StreamRng = ChaCha12Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct RandomSource {
    seed: u64,
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl RandomSource {
    pub fn new(seed: u64) -> Self {
        RandomSource { seed }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Independent stream for one `(epoch, step, replicate)` key.
    pub fn substream(&self, epoch: u64, step: u64, replicate: u64) -> StreamRng {
        let mut state = self.seed;
        for key in [epoch, step, replicate] {
            let mixed = splitmix64(&mut state) ^ key;
            state = mixed.rotate_left(17).wrapping_mul(0x2545_F491_4F6C_DD1D);
        }
        let mut seed = [0u8; 32];
        for chunk in seed.chunks_exact_mut(8) {
            chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
        }
        ChaCha12Rng::from_seed(seed)
    }

    /// A single stream for consumers that need only one (diagnostics, data generation).
    pub fn stream(&self) -> StreamRng {
        self.substream(0, 0, 0)
    }
}
