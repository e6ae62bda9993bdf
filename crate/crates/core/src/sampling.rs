//! Seeded quasi-random points.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn radical_inverse(mut i: u64, base: u64) -> f64 {
    let inv = 1.0 / base as f64;
    let mut f = inv;
    let mut v = 0.0;
    while i > 0 {
        v += f * (i % base) as f64;
        i /= base;
        f *= inv;
    }
    v
}

/// Two-dimensional Halton sequence with a seeded Cranley-Patterson shift.
#[derive(Debug, Clone)]
pub struct Halton2 {
    shift: (f64, f64),
    index: u64,
}

impl Halton2 {
    pub fn new(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self { shift: (rng.gen(), rng.gen()), index: 1 }
    }
}

impl Iterator for Halton2 {
    type Item = (f64, f64);

    fn next(&mut self) -> Option<(f64, f64)> {
        let u = (radical_inverse(self.index, 2) + self.shift.0).fract();
        let v = (radical_inverse(self.index, 3) + self.shift.1).fract();
        self.index += 1;
        Some((u, v))
    }
}
