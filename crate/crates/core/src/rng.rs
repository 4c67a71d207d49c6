//! Reproducible random streams.
//!
//! Every random quantity in the toolkit comes from ChaCha8 (`rand_chacha`,
//! value-stable across platforms). Per-run seeds are derived from a master
//! seed with a SplitMix64 finalizer; Rubin clocks are addressed by
//! `(site, direction, clock index)` so that any two walks sharing a seed see
//! the same clock values regardless of the order in which they are used.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1};

/// Identifier recorded in every output file.
pub const PRNG_ID: &str = "chacha8(rand_chacha 0.9)+splitmix64-derive/v1";

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 output function (bijective on `u64`).
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of run `run_index` under `master`:
/// `mix64(master + (run_index + 1) * 0x9E3779B97F4A7C15)` (wrapping).
///
/// For a fixed master this is injective in `run_index`: the affine map is a
/// bijection modulo 2^64 (odd multiplier) and `mix64` is a bijection.
pub fn derive_seed(master: u64, run_index: u64) -> u64 {
    mix64(master.wrapping_add(run_index.wrapping_add(1).wrapping_mul(GOLDEN)))
}

/// Sequential stream driving one discrete-time walk.
#[derive(Debug, Clone)]
pub struct WalkRng(ChaCha8Rng);

impl WalkRng {
    pub fn new(seed: u64) -> Self {
        WalkRng(ChaCha8Rng::seed_from_u64(seed))
    }

    /// Uniform in `[0, 1)` with 53 random bits; one 64-bit draw.
    pub fn uniform(&mut self) -> f64 {
        to_unit(self.0.next_u64())
    }
}

impl RngCore for WalkRng {
    fn next_u32(&mut self) -> u32 {
        self.0.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.0.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.0.fill_bytes(dst)
    }
}

#[inline]
pub fn to_unit(x: u64) -> f64 {
    (x >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Stateless, counter-keyed source of standard exponential variables.
#[derive(Debug, Clone)]
pub struct ClockSource {
    base: ChaCha8Rng,
}

/// Words reserved for one clock draw inside a stream (Ziggurat rejections
/// consume a handful).
const WORDS_PER_CLOCK: u128 = 1 << 16;

impl ClockSource {
    pub fn new(seed: u64) -> Self {
        ClockSource {
            base: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    fn stream_id(site: i64, plus: bool) -> u64 {
        ((site as u64) << 1) | plus as u64
    }

    /// Standard exponential keyed by `(site, direction, index)`.
    pub fn standard_exp(&self, site: i64, plus: bool, index: u64) -> f64 {
        let mut rng = self.base.clone();
        rng.set_stream(Self::stream_id(site, plus));
        rng.set_word_pos(index as u128 * WORDS_PER_CLOCK);
        Exp1.sample(&mut rng)
    }
}
