//! Order-independent 64-bit state digests.
//!
//! Every structure's digest is the wrapping sum of per-entry hashes, so it
//! can be updated in O(1) when a single entry changes and recomputed from
//! scratch for cross-checking.

pub(crate) const TAG_PALETTE: u64 = 1;
pub(crate) const TAG_PATTERN: u64 = 2;
pub(crate) const TAG_RESIDUAL: u64 = 3;
pub(crate) const TAG_FLAGS: u64 = 4;
pub(crate) const TAG_SESSION: u64 = 5;

/// splitmix64 finalizer.
pub(crate) fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub(crate) fn entry_hash(tag: u64, key: u64, value: u64) -> u64 {
    let h = mix64(tag.wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ key);
    mix64(h ^ value.wrapping_mul(0xd6e8_feb8_6659_fd93))
}

/// FNV-1a over a byte string, used to fold multi-byte keys into one word.
pub(crate) fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, &b| {
        (h ^ u64::from(b)).wrapping_mul(0x0100_0000_01b3)
    })
}
