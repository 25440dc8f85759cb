//! Reference random stream for resampling.
//!
//! Replicate `r` of a run seeded with `seed` draws from ChaCha8 keyed with
//! the little-endian bytes of `seed` (zero-padded to 32 bytes), nonce 0 and
//! stream id `r`. Uniform indices below `m` take successive `next_u64`
//! words and reject any word `>= m * floor(2^64 / m)`, returning `word % m`.
//! Both pieces are fixed so ports in other languages can reproduce runs
//! exactly; `tests/rng_vector.rs` pins the first draws.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn replicate_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(stream);
    rng
}

/// Uniform integer in `0..m`.
pub fn uniform_index<R: RngCore + ?Sized>(rng: &mut R, m: u64) -> u64 {
    assert!(m > 0, "empty range");
    let zone = m * (u64::MAX / m);
    loop {
        let w = rng.next_u64();
        if w < zone {
            return w % m;
        }
    }
}

/// Uniform real in `[0, 1)` from the top 53 bits of one word.
pub fn uniform_unit<R: RngCore + ?Sized>(rng: &mut R) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}
