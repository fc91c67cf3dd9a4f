//! Random-stream plumbing: per-replicate counter-based streams and a few primitive draws.

use rand::{RngCore, SeedableRng};
pub use rand_chacha::ChaCha8Rng;

/// Stream for replicate `stream` of a run seeded with `master`.
///
/// Streams are independent ChaCha8 sequences keyed by the master seed, so a
/// replicate's draws depend only on `(master, stream)`.
pub fn replicate_rng(master: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(stream);
    rng
}

/// Packs a block (grid point, experiment part) and an index into a stream id.
pub fn stream_id(block: u64, index: u64) -> u64 {
    (block << 40) | (index & ((1 << 40) - 1))
}

/// Uniform draw on the open interval (0, 1).
#[inline]
pub fn open01<R: RngCore + ?Sized>(rng: &mut R) -> f64 {
    ((rng.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
}

/// Standard exponential draw.
#[inline]
pub fn exp1<R: RngCore + ?Sized>(rng: &mut R) -> f64 {
    -libm::log(open01(rng))
}

/// Uniform index in `0..n` (`n > 0`).
#[inline]
pub fn index<R: RngCore + ?Sized>(rng: &mut R, n: usize) -> usize {
    debug_assert!(n > 0);
    ((rng.next_u64() as u128 * n as u128) >> 64) as usize
}

/// Poisson draw with the given mean (0 for non-positive means).
pub fn poisson<R: RngCore + ?Sized>(rng: &mut R, mean: f64) -> u64 {
    use rand_distr::Distribution;
    if !(mean > 0.0) {
        return 0;
    }
    if mean < 12.0 {
        // Multiplicative inversion is exact and cheap for small means.
        let limit = libm::exp(-mean);
        let mut k = 0;
        let mut prod = open01(rng);
        while prod > limit {
            k += 1;
            prod *= open01(rng);
        }
        return k;
    }
    match rand_distr::Poisson::new(mean) {
        Ok(d) => d.sample(rng) as u64,
        Err(_) => u64::MAX,
    }
}
