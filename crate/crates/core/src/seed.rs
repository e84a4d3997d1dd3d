//! Seed derivation. All randomness flows from one root seed through named
//! sub-seeds, so parallel work never depends on scheduling order.

#[inline]
fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Hash a seed together with a list of words.
pub fn mix(seed: u64, words: &[u64]) -> u64 {
    let mut h = splitmix(seed);
    for &w in words {
        h = splitmix(h ^ w);
    }
    h
}

/// Sub-seed for a named stage ("scene", "trace", "train", ...).
pub fn named(seed: u64, name: &str) -> u64 {
    // FNV-1a over the name keeps this independent of std's hasher.
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in name.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01B3);
    }
    mix(seed, &[h])
}
