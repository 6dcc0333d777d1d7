//! Seed derivation. Every random stream in the crate is a ChaCha8 generator
//! keyed by a SHA-256 digest of the master seed and a labelled context, so a
//! stream can be regenerated in isolation and in any execution order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::panel::CountryMonthKey;

/// Builds a seed from a master seed, a domain label and context parts.
pub fn derive(master: u64, domain: &str, parts: &[&[u8]]) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(master.to_le_bytes());
    for p in std::iter::once(domain.as_bytes()).chain(parts.iter().copied()) {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p);
    }
    h.finalize().into()
}

pub fn rng(master: u64, domain: &str, parts: &[&[u8]]) -> ChaCha8Rng {
    ChaCha8Rng::from_seed(derive(master, domain, parts))
}

/// Stream for one (country, month, fold) bootstrap unit.
pub fn bootstrap_rng(master: u64, key: &CountryMonthKey, fold: usize) -> ChaCha8Rng {
    rng(
        master,
        "bootstrap",
        &[
            key.country.as_bytes(),
            &key.month.year().to_le_bytes(),
            &[key.month.month()],
            &(fold as u64).to_le_bytes(),
        ],
    )
}

pub fn simple(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Hex SHA-256 of arbitrary bytes, truncated to 16 chars.
pub fn short_hash(bytes: &[u8]) -> String {
    let d = Sha256::digest(bytes);
    d.iter().take(8).map(|b| format!("{b:02x}")).collect()
}
