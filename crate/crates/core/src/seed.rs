//! Stable seed derivation.
//!
//! Per-scene and per-object RNG streams are derived from the master seed with
//! a fixed FNV-1a/splitmix construction, so results do not depend on the
//! standard library's hasher or on processing order.

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn fnv1a(mut state: u64, bytes: &[u8]) -> u64 {
    for &b in bytes {
        state ^= u64::from(b);
        state = state.wrapping_mul(FNV_PRIME);
    }
    state
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derive the RNG seed for one object's instruction generation. `stream`
/// separates the pick and place subsampling streams.
pub(crate) fn object_stream_seed(master: u64, scene_id: &str, object_id: u32, stream: u8) -> u64 {
    let mut h = fnv1a(FNV_OFFSET, scene_id.as_bytes());
    h = fnv1a(h, &object_id.to_le_bytes());
    h = fnv1a(h, &[stream]);
    splitmix(master ^ h)
}
