//! Collision-aware target-driven 6-DoF grasp planning at desk scale.
//!
//! An analytic scene simulator feeds brute-force collision and stability
//! oracles, which label voxel grids used to train two small 3D CNNs (a
//! collision-free reachability predictor and a grasp stability predictor).
//! The planner picks the sampled grasp maximizing the product of both scores.

pub mod binio;
pub mod features;
pub mod geometry;
pub mod grasp;
pub mod nn;
pub mod oracle;
pub mod pipeline;
pub mod recognition;
pub mod scene;

pub use binio::FormatError;

/// SplitMix64 finalizer, used to derive independent child seeds.
pub fn mix_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed
        .wrapping_add(stream.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
