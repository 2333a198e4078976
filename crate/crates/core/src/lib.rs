//! Performance-degradation assessment for electrical machines from operation
//! power traces.
//!
//! The offline path extracts time- and value-domain statistics from each
//! trace, keeps the Fisher-discriminative ones, compresses them with kernel
//! PCA, mines latent degradation states with multi-resolution SOMs, checks
//! them against fault archetypes through health-index profiles, and trains one
//! hybrid-topology discrete HMM ensemble per group of related states. The
//! online path classifies windows of new operations by maximum likelihood.

pub mod assess;
pub mod error;
pub mod features;
pub mod hmm;
pub mod io;
pub mod kpca;
pub mod pipeline;
pub mod select;
pub mod signal;
pub mod som;
pub mod synth;

pub use error::{Error, Result};

/// Version tag written into every persisted artifact.
pub const SCHEMA_VERSION: u32 = 1;

/// Derives an independent child seed (splitmix64 finaliser over the pair).
pub fn derive_seed(master: u64, stream: u64) -> u64 {
    let mut z = master
        .wrapping_add(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(stream.wrapping_mul(0xBF58_476D_1CE4_E5B9));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
