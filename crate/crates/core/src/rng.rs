//! Counter-based pseudorandom streams.
//!
//! Every random quantity in this crate is a pure function of a 64-bit key
//! and a counter, in the style of splitmix64. This gives each lattice site
//! an addressable stream: the k-th variate of any site is computable
//! without generating anything else, queries are repeatable in any order,
//! and replicas running in parallel stay bitwise reproducible.

/// splitmix64 finalizer; full-period bijection on u64.
#[inline]
pub fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Folds a slice of words into a single stream key.
#[inline]
pub fn mix_words(seed: u64, words: &[u64]) -> u64 {
    let mut h = mix(seed);
    for (i, &w) in words.iter().enumerate() {
        h = mix(h ^ w.wrapping_add((i as u64 + 1).wrapping_mul(0xa076_1d64_78bd_642f)));
    }
    h
}

/// Derives a named sub-seed from a global seed. All components draw their
/// randomness through this single funnel so a run is reproducible from
/// (global seed, component label, indices).
pub fn derive(seed: u64, label: &str, parts: &[u64]) -> u64 {
    let mut h = mix(seed ^ 0x5851_f42d_4c95_7f2d);
    for b in label.as_bytes() {
        h = mix(h ^ u64::from(*b));
    }
    mix_words(h, parts)
}

/// The k-th u64 of the stream identified by `key`.
#[inline]
pub fn stream_u64(key: u64, k: u64) -> u64 {
    mix(key ^ k.wrapping_mul(0xd6e8_feb8_6659_fd93))
}

/// Uniform variate in the open interval (0,1); never exactly 0 or 1, so
/// -ln(u) is always finite. 52 bits are used so that the half-step offset
/// stays exactly representable at the top of the range.
#[inline]
pub fn unit_open(bits: u64) -> f64 {
    ((bits >> 12) as f64 + 0.5) * (1.0 / 4503599627370496.0) // 2^52
}

/// The k-th Uniform(0,1) variate of a stream.
#[inline]
pub fn stream_uniform(key: u64, k: u64) -> f64 {
    unit_open(stream_u64(key, k))
}

/// The k-th Exp(rate) variate of a stream, by inverse CDF.
#[inline]
pub fn stream_exp(key: u64, k: u64, rate: f64) -> f64 {
    -stream_uniform(key, k).ln() / rate
}
