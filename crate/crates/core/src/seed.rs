//! Seed derivation for independent sub-streams.

/// One round of the splitmix64 finalizer.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for the `index`-th independent stream under `master`: `master ^ splitmix64(index)`.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    master ^ splitmix64(index)
}
