use crate::rng::Rng;

/// Seed for item `index` of a named stream under `master`. Distinct
/// streams and indices give unrelated seeds; the mapping is fixed.
pub fn derive_seed(master: u64, stream: &str, index: u64) -> u64 {
    // FNV-1a of the stream name.
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in stream.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    let mut rng = Rng::new(master ^ h.rotate_left(29));
    let base = rng.next_u64();
    Rng::new(base.wrapping_add(index.wrapping_mul(0x9E37_79B9_7F4A_7C15))).next_u64()
}
