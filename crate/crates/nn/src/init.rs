use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::tensor::Real;

/// Standard deviation used for every convolution and linear weight.
pub const WEIGHT_STD: f64 = 0.02;

pub fn normal<T: Real, R: Rng + ?Sized>(rng: &mut R, n: usize, std: f64) -> Vec<T> {
    let dist = Normal::new(0.0, std).expect("valid std");
    (0..n).map(|_| T::of(dist.sample(rng))).collect()
}
