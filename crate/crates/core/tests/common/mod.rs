//! Fixtures and solver-independent oracles shared by the integration tests.
#![allow(dead_code)]

pub mod fixtures;
pub mod kkt_oracle;
pub mod lp_oracle;
pub mod mps_reader;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// `|a - b| <= tol * max(1, |b|)`.
pub fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * b.abs().max(1.0)
}
