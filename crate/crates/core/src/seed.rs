//! Named random streams derived from one master seed.

/// Seed for the stream `label` under `master`. Streams with different labels
/// are unrelated, so adding a consumer never shifts another one's draws.
pub fn derive_seed(master: u64, label: &str) -> u64 {
    // FNV-1a over the label, then a SplitMix64 finalizer over the mix
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in label.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    splitmix(master ^ splitmix(h))
}

/// Sub-stream `index` of a stream, e.g. one per variable pair.
pub fn derive_indexed(seed: u64, index: u64) -> u64 {
    splitmix(seed ^ splitmix(index.wrapping_add(0x9e37_79b9_7f4a_7c15)))
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
