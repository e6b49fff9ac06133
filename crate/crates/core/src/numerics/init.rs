use super::{Scalar, Tensor};
use crate::rng::SplitMix64;

/// Glorot/Xavier uniform initialisation: `U(-s, s)` with
/// `s = sqrt(6 / (fan_in + fan_out))`.
pub fn xavier_uniform<T: Scalar>(shape: &[usize], fan_in: usize, fan_out: usize, rng: &mut SplitMix64) -> Tensor<T> {
    let s = (6.0 / (fan_in + fan_out) as f64).sqrt();
    Tensor::from_fn(shape, |_| T::of(rng.uniform(-s, s)))
}
