//! Deterministic derivation of per-component RNG seeds from one global seed.
//!
//! Every stochastic component (MCMC chain, optimizer restart, sweep point)
//! receives `derive(global, tag, index)` so that parallel work never shares
//! or collides streams, and a run is reproducible from the global seed alone.
//! The scheme is frozen: FNV-1a over the tag, golden-ratio stride over the
//! index, one splitmix64 finalization.

/// splitmix64 finalizer; full-period bijection on u64.
pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xCBF2_9CE4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01B3);
    }
    h
}

/// Derive a child seed for component `tag`, instance `index`.
pub fn derive(global: u64, tag: &str, index: u64) -> u64 {
    splitmix64(global ^ fnv1a(tag.as_bytes()) ^ index.wrapping_mul(0x9E37_79B9_7F4A_7C15))
}
