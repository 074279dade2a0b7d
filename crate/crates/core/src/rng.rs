//! Counter-based random numbers: every draw is a pure function of
//! `(seed, stream, counter)`, so streams do not depend on iteration order.

pub(crate) fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Uniform in `[0, 1)` keyed by seed, stream (neuron) and counter (step).
pub fn counter_uniform(seed: u64, stream: u64, counter: u64) -> f64 {
    let h = splitmix64(splitmix64(splitmix64(seed) ^ stream) ^ counter);
    (h >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}
