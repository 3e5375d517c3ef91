//! Named seed derivation.
//!
//! Every random stream in the pipeline is derived from one master seed and a
//! (component, id) label, so results do not depend on evaluation order or on
//! how work is split across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

/// The generator used everywhere. Fixed so outputs are stable across platforms.
pub type SdaRng = ChaCha8Rng;

/// Derives a child seed from `master` and a `(component, id)` label.
pub fn derive(master: u64, component: &str, id: &str) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(master.to_le_bytes());
    hasher.update((component.len() as u64).to_le_bytes());
    hasher.update(component.as_bytes());
    hasher.update((id.len() as u64).to_le_bytes());
    hasher.update(id.as_bytes());
    let digest = hasher.finalize();
    let mut bytes = [0u8; 8];
    bytes.copy_from_slice(&digest[..8]);
    u64::from_le_bytes(bytes)
}

/// Derives a child seed keyed by a numeric index.
pub fn derive_index(master: u64, component: &str, index: usize) -> u64 {
    derive(master, component, &index.to_string())
}

pub fn rng(seed: u64) -> SdaRng {
    SdaRng::seed_from_u64(seed)
}

pub fn derived_rng(master: u64, component: &str, id: &str) -> SdaRng {
    rng(derive(master, component, id))
}
