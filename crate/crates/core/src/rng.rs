//! Seeded random streams.
//!
//! Every random draw in the engine comes from a [`Stream`]. A stream is a
//! ChaCha8 generator keyed by a root seed, with an independent 64-bit stream
//! id selecting a disjoint keystream: `substream(seed, i)` is
//! `ChaCha8Rng::seed_from_u64(seed)` with `set_stream(i)`. Substreams with
//! distinct ids never overlap, so work split across segments produces the
//! same numbers regardless of scheduling order.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type Stream = ChaCha8Rng;

/// Root stream for `seed` (substream 0).
pub fn root(seed: u64) -> Stream {
    substream(seed, 0)
}

/// Disjoint substream `index` of `seed`.
pub fn substream(seed: u64, index: u64) -> Stream {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Draws an index from `probs` by inverse CDF using exactly one uniform.
///
/// `probs` need not be normalized; zero entries are never selected.
pub fn categorical<R: RngCore + ?Sized>(rng: &mut R, probs: &[f64]) -> usize {
    let u: f64 = rng.random();
    categorical_from_uniform(u, probs)
}

pub fn categorical_from_uniform(u: f64, probs: &[f64]) -> usize {
    let total: f64 = probs.iter().sum();
    let target = u * total;
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p <= 0.0 {
            continue;
        }
        acc += p;
        last_positive = i;
        if target < acc {
            return i;
        }
    }
    last_positive
}
