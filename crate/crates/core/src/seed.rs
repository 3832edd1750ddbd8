//! Named sub-seed derivation so every randomized component draws from its own
//! deterministic stream under one master seed.

use sha2::{Digest, Sha256};

pub fn subseed(master: u64, name: &str) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(master.to_le_bytes());
    hasher.update(name.as_bytes());
    let digest = hasher.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("digest is long enough"))
}
