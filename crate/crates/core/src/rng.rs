//! Seeded random streams.
//!
//! Every random quantity is drawn from a ChaCha stream identified by
//! `(seed, stream id)`. Identical seeds reproduce bit-identical draws
//! regardless of evaluation order.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Stream families. The realization or draw index is added to the family
/// base, so families never collide for fewer than 2^32 draws.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    UserChannel,
    Victim,
    Symbols,
    Oracle,
}

impl Stream {
    fn base(self) -> u64 {
        match self {
            Stream::UserChannel => 1 << 32,
            Stream::Victim => 2 << 32,
            Stream::Symbols => 3 << 32,
            Stream::Oracle => 4 << 32,
        }
    }
}

pub fn stream(seed: u64, family: Stream, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(family.base() + (index & 0xffff_ffff));
    rng
}

/// One draw from CN(0, variance).
pub fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R, variance: f64) -> Complex64 {
    let s = (0.5 * variance).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(s * re, s * im)
}
