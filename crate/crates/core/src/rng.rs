//! Seeded random streams.
//!
//! Every stochastic component draws from a ChaCha8 generator keyed by the
//! top-level seed and a named domain, with the 64-bit stream id selecting an
//! independent substream (row block, GLD path, ...). ChaCha is counter based,
//! so a substream's output does not depend on how many threads consumed the
//! other substreams.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ContinuousCDF, Normal};

/// Named randomness domains. Distinct domains never share a key.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Domain {
    Simulation,
    Gld,
    LocalStarts,
    Test,
}

impl Domain {
    fn tag(self) -> u64 {
        match self {
            Domain::Simulation => 0x5349_4d55_4c41_5445,
            Domain::Gld => 0x474c_445f_5041_5448,
            Domain::LocalStarts => 0x4c4f_4341_4c5f_5354,
            Domain::Test => 0x5445_5354_5f5f_5f5f,
        }
    }
}

/// Generator for substream `index` of `domain` under `seed`.
pub fn substream(seed: u64, domain: Domain, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ domain.tag());
    rng.set_stream(index);
    rng
}

/// Uniform draw on the open interval (0, 1) with 53 bits of resolution.
#[inline]
pub fn open_uniform<R: RngCore + ?Sized>(rng: &mut R) -> f64 {
    ((rng.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
}

/// Standard normal draw by inverse-CDF transform of an open uniform.
#[inline]
pub fn standard_normal<R: RngCore + ?Sized>(rng: &mut R) -> f64 {
    std_normal_quantile(open_uniform(rng))
}

#[inline]
pub(crate) fn std_normal_quantile(u: f64) -> f64 {
    standard().inverse_cdf(u)
}

#[inline]
pub(crate) fn std_normal_cdf(x: f64) -> f64 {
    standard().cdf(x)
}

#[inline]
fn standard() -> Normal {
    // `Normal::standard` is a plain constructor, no allocation.
    Normal::standard()
}
