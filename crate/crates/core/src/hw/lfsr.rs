//! Per-core 32-bit Galois LFSR.
//!
//! One output word is the register after 32 shifts, so each word is built
//! from fresh feedback bits. The 32-step map is linear over GF(2) and is
//! evaluated with four byte-indexed tables.

use serde::{Deserialize, Serialize};

/// Feedback mask for x^32 + x^22 + x^2 + x + 1 in right-shift Galois form.
pub const LFSR_TAPS: u32 = 0x8020_0003;

/// Replacement for the all-zero state, which is a fixed point.
const ZERO_SEED_REMAP: u32 = 0x1F2E_3D4C;

const fn shift(s: u32) -> u32 {
    if s & 1 == 1 {
        (s >> 1) ^ LFSR_TAPS
    } else {
        s >> 1
    }
}

const fn advance_word_naive(mut s: u32) -> u32 {
    let mut i = 0;
    while i < 32 {
        s = shift(s);
        i += 1;
    }
    s
}

const fn build_tables() -> [[u32; 256]; 4] {
    let mut t = [[0u32; 256]; 4];
    let mut k = 0;
    while k < 4 {
        let mut b = 0;
        while b < 256 {
            t[k][b] = advance_word_naive((b as u32) << (8 * k));
            b += 1;
        }
        k += 1;
    }
    t
}

static WORD_TABLES: [[u32; 256]; 4] = build_tables();

#[inline]
fn advance_word(s: u32) -> u32 {
    WORD_TABLES[0][(s & 0xff) as usize]
        ^ WORD_TABLES[1][((s >> 8) & 0xff) as usize]
        ^ WORD_TABLES[2][((s >> 16) & 0xff) as usize]
        ^ WORD_TABLES[3][(s >> 24) as usize]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LfsrState(u32);

impl LfsrState {
    pub fn new(seed: u32) -> Self {
        Self(if seed == 0 { ZERO_SEED_REMAP } else { seed })
    }

    pub fn state(&self) -> u32 {
        self.0
    }

    /// Advances one word and returns it.
    #[inline]
    pub fn next_u32(&mut self) -> u32 {
        self.0 = advance_word(self.0);
        self.0
    }

    /// True with probability `p`; consumes exactly one word.
    #[inline]
    pub fn bernoulli(&mut self, p: Probability) -> bool {
        (self.next_u32() as u64) < p.0
    }
}

/// Q0.32 probability: a draw succeeds when the word is below the threshold.
/// The threshold spans `[0, 2^32]` so both 0 and 1 are exact.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct Probability(u64);

impl Probability {
    pub const ZERO: Self = Self(0);
    pub const ONE: Self = Self(1 << 32);

    pub fn from_f64(p: f64) -> Self {
        let t = (p.clamp(0.0, 1.0) * 4_294_967_296.0).round();
        Self(t as u64)
    }

    /// Per-step firing probability for a Poisson rate.
    pub fn from_rate(rate_hz: f64, dt_ms: f64) -> Self {
        Self::from_f64(rate_hz * dt_ms / 1000.0)
    }

    pub fn threshold(&self) -> u64 {
        self.0
    }

    pub fn as_f64(&self) -> f64 {
        self.0 as f64 / 4_294_967_296.0
    }

    pub fn is_zero(&self) -> bool {
        self.0 == 0
    }
}

/// Seed of the LFSR on `(chip, core)`: the run seed folded to 32 bits, XOR
/// the flat core index.
pub fn core_seed(run_seed: u64, chip: usize, core: usize, cores_per_chip: usize) -> u32 {
    let folded = crate::rng::splitmix64(run_seed);
    let folded = (folded ^ (folded >> 32)) as u32;
    folded ^ (chip * cores_per_chip + core) as u32
}
