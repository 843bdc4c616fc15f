//! Seeded noise sources. Every random draw in the crate goes through an
//! explicit generator owned by the caller.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::tensor::{ComplexArray, C64};

pub fn seeded(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Circularly symmetric complex normal draw with `E|n|^2 = 1`.
pub fn complex_normal<R: rand::Rng + ?Sized>(rng: &mut R) -> C64 {
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    C64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

/// Noise generator for the stochastic sampler steps. `Zero` stubs every draw
/// to zero so the deterministic part of a step can be checked in isolation.
#[derive(Clone, Debug)]
pub enum Noise {
    Seeded(Box<ChaCha8Rng>),
    Zero,
}

impl Noise {
    pub fn from_seed(seed: u64) -> Self {
        Noise::Seeded(Box::new(seeded(seed)))
    }

    pub fn draw(&mut self, shape: &[usize]) -> ComplexArray {
        match self {
            Noise::Seeded(rng) => ComplexArray::from_fn(shape, |_| complex_normal(rng)),
            Noise::Zero => ComplexArray::zeros(shape),
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, Noise::Zero)
    }
}

/// Derives an independent child seed; used to give each slice or chain its own stream.
pub fn child_seed(seed: u64, index: u64) -> u64 {
    // splitmix64 finalizer
    let mut z = seed ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
