use rand::{Rng as _, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::{Shape, Tensor};
use crate::error::Result;

/// Seeded generator used for every random draw in the crate.
///
/// Backed by ChaCha8 (seed expanded with `seed_from_u64`), which produces
/// the same stream on every platform. Independent sub-streams are obtained
/// with [`Rng::derive`], so per-item draws do not depend on iteration order.
#[derive(Clone, Debug)]
pub struct Rng {
    inner: ChaCha8Rng,
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        Rng { inner: ChaCha8Rng::seed_from_u64(seed) }
    }

    /// Generator for sub-stream `stream` of `seed`.
    pub fn derive(seed: u64, stream: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream);
        Rng { inner }
    }

    /// Uniform in `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.inner.gen::<f64>()
    }

    /// Uniform in `[lo, hi)`.
    pub fn range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    /// Standard normal draw.
    pub fn normal(&mut self) -> f64 {
        self.inner.sample(StandardNormal)
    }

    /// Uniform integer in `[0, n)`.
    pub fn below(&mut self, n: usize) -> usize {
        self.inner.gen_range(0..n)
    }

    /// Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i + 1);
            items.swap(i, j);
        }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.gen()
    }
}

/// Initialization scheme for [`random_fill`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Init {
    Uniform { lo: f32, hi: f32 },
    /// Zero-mean normal with standard deviation `sqrt(2 / fan_in)`.
    ScaledNormal { fan_in: usize },
}

pub fn random_fill(rng: &mut Rng, shape: Shape, init: Init) -> Result<Tensor> {
    let data = match init {
        Init::Uniform { lo, hi } => (0..shape.len())
            .map(|_| rng.range(f64::from(lo), f64::from(hi)) as f32)
            .collect(),
        Init::ScaledNormal { fan_in } => {
            let std = (2.0 / fan_in.max(1) as f64).sqrt();
            (0..shape.len()).map(|_| (rng.normal() * std) as f32).collect()
        }
    };
    Tensor::new(shape, data)
}
