//! Counter-based randomness: every draw is a pure function of a seed and
//! an index, so masks and samples never depend on evaluation order.

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// 64 well-mixed bits for `(seed, counter)`.
#[inline]
pub fn mix(seed: u64, counter: u64) -> u64 {
    splitmix64(splitmix64(seed) ^ counter.wrapping_mul(0xD6E8_FEB8_6659_FD93))
}

/// Uniform sample in `[0, 1)` with 53 bits of precision.
#[inline]
pub fn uniform01(seed: u64, counter: u64) -> f64 {
    (mix(seed, counter) >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Derives an independent named sub-seed (FNV-1a over the name).
pub fn sub_seed(seed: u64, name: &str) -> u64 {
    let mut h: u64 = 0xCBF2_9CE4_8422_2325;
    for b in name.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01B3);
    }
    mix(seed, h)
}
