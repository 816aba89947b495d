//! Normal draws keyed by `(seed, path, step)`.
//!
//! Each path owns a ChaCha8 stream; each step starts at its own word offset,
//! so any draw can be regenerated without replaying earlier ones.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// Generator positioned at the start of `path`'s stream.
pub fn path_rng(seed: u64, path: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(path);
    rng
}

/// Fills `out` with the standard normal draws for `step` of the given path.
pub fn fill_normals(rng: &mut ChaCha8Rng, step: u64, out: &mut [f64]) {
    rng.set_word_pos((step as u128) << 32);
    for x in out.iter_mut() {
        *x = StandardNormal.sample(rng);
    }
}

/// The draws for one `(seed, path, step)` key.
pub fn normals(seed: u64, path: u64, step: u64, dim: usize) -> Vec<f64> {
    let mut out = vec![0.0; dim];
    fill_normals(&mut path_rng(seed, path), step, &mut out);
    out
}
