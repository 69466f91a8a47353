//! Seed derivation. Every random stream in the crate is a ChaCha8 generator
//! seeded from the single master seed through [`derive_seed`], so a run is a
//! pure function of its configuration.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Stream tags keep the derived seeds of unrelated consumers apart.
pub mod tag {
    pub const SCENARIO: u64 = 0x5343_454e;
    pub const WEIGHT_INIT: u64 = 0x494e_4954;
    pub const AGENT: u64 = 0x4147_4e54;
    pub const REPLAY: u64 = 0x5250_4c59;
    pub const EVALUATION: u64 = 0x4556_414c;
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// `splitmix64(splitmix64(splitmix64(master) ^ tag) ^ index)`.
pub fn derive_seed(master: u64, tag: u64, index: u64) -> u64 {
    splitmix64(splitmix64(splitmix64(master) ^ tag) ^ index)
}

pub fn stream(master: u64, tag: u64, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(master, tag, index))
}

/// Exact position of a ChaCha8 stream, enough to resume it bit-for-bit.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngState {
    pub seed: String,
    pub stream: u64,
    pub word_pos: String,
}

impl RngState {
    pub fn capture(rng: &ChaCha8Rng) -> Self {
        let seed = rng
            .get_seed()
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect::<String>();
        RngState {
            seed,
            stream: rng.get_stream(),
            word_pos: rng.get_word_pos().to_string(),
        }
    }

    pub fn restore(&self) -> Result<ChaCha8Rng> {
        if self.seed.len() != 64 {
            return Err(Error::format("rng state", "seed must be 64 hex digits"));
        }
        let mut seed = [0u8; 32];
        for (i, byte) in seed.iter_mut().enumerate() {
            *byte = u8::from_str_radix(&self.seed[2 * i..2 * i + 2], 16)
                .map_err(|e| Error::format("rng state", e.to_string()))?;
        }
        let word_pos: u128 = self
            .word_pos
            .parse()
            .map_err(|e: std::num::ParseIntError| Error::format("rng state", e.to_string()))?;
        let mut rng = ChaCha8Rng::from_seed(seed);
        rng.set_stream(self.stream);
        rng.set_word_pos(word_pos);
        Ok(rng)
    }
}
