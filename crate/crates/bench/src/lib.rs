//! Fixtures shared by the criterion benches.

use gwavenet::tensor::{random_fill, Init};
use gwavenet::{Rng, Shape, Tensor};

/// `n x 1 x size x size` batch of uniform `[0, 1)` pixels.
pub fn batch(n: usize, size: usize, seed: u64) -> Tensor {
    let mut rng = Rng::new(seed);
    let data = (0..n * size * size).map(|_| rng.uniform() as f32).collect();
    Tensor::new(Shape::new(n, 1, size, size), data).expect("positive dims")
}

/// Scaled-normal conv weight `[filters, channels, k, k]`.
pub fn conv_weight(filters: usize, channels: usize, k: usize, seed: u64) -> Tensor {
    let mut rng = Rng::new(seed);
    random_fill(&mut rng, Shape::new(filters, channels, k, k), Init::ScaledNormal { fan_in: channels * k * k })
        .expect("positive dims")
}
