//! Seed derivation. Every randomized component takes an explicit 64-bit seed;
//! sub-seeds are derived by mixing so that adding one randomized consumer
//! never perturbs another's stream.

/// Fixed per-role constants XORed into the master seed before mixing.
pub mod role {
    pub const SCENE_GEN: u64 = 0x5343_454e_4547_454e; // "SCENEGEN"
    pub const DEGRADE: u64 = 0x4445_4752_4144_4531;
    pub const POLICY: u64 = 0x504f_4c49_4359_5345;
    pub const EMBED: u64 = 0x454d_4245_4444_4552;
    pub const GIST_RENDER: u64 = 0x4749_5354_5245_4e44;
}

/// SplitMix64 finalizer; full-period bijection on u64.
#[inline]
pub fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives the sub-seed for `role` and a stream index (scene id, tile index, ...).
pub fn derive(master: u64, role: u64, stream: u64) -> u64 {
    mix(mix(master ^ role) ^ stream)
}
