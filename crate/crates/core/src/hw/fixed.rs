use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rounding {
    #[default]
    TruncateTowardZero,
}

/// Two's-complement fixed-point format with `frac_bits` fractional bits in a
/// `word_bits` word. The default is Q19.12 in 32 bits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FixedPointSpec {
    pub frac_bits: u32,
    pub word_bits: u32,
    /// Applied to products; conversion from reals rounds half to even.
    pub rounding: Rounding,
}

impl Default for FixedPointSpec {
    fn default() -> Self {
        Self { frac_bits: 12, word_bits: 32, rounding: Rounding::TruncateTowardZero }
    }
}

impl FixedPointSpec {
    pub fn is_valid(&self) -> bool {
        self.word_bits <= 32 && self.word_bits >= 4 && self.frac_bits + 2 < self.word_bits
    }

    pub fn one(&self) -> i64 {
        1i64 << self.frac_bits
    }

    pub fn max_word(&self) -> i64 {
        (1i64 << (self.word_bits - 1)) - 1
    }

    pub fn min_word(&self) -> i64 {
        -(1i64 << (self.word_bits - 1))
    }

    /// Quantizes `x`, rounding half to even. The flag is set when the value
    /// saturated at the word bounds.
    pub fn to_fixed(&self, x: f64) -> (i32, bool) {
        let scaled = (x * self.one() as f64).round_ties_even();
        if scaled.is_nan() {
            return (0, true);
        }
        if scaled > self.max_word() as f64 {
            (self.max_word() as i32, true)
        } else if scaled < self.min_word() as f64 {
            (self.min_word() as i32, true)
        } else {
            (scaled as i32, false)
        }
    }

    pub fn from_fixed(&self, x: i32) -> f64 {
        x as f64 / self.one() as f64
    }

    pub fn saturate(&self, x: i64) -> i32 {
        x.clamp(self.min_word(), self.max_word()) as i32
    }

    /// Fixed-point product, truncated toward zero and saturated.
    pub fn mul(&self, a: i32, b: i32) -> i32 {
        let p = a as i64 * b as i64;
        self.saturate(p / self.one())
    }

    pub fn add(&self, a: i32, b: i32) -> i32 {
        self.saturate(a as i64 + b as i64)
    }
}
