//! Weight initialization helpers.
//!
//! Convolution and linear weights draw from a centered uniform
//! distribution scaled by `1/sqrt(fan_in)`; embeddings from `N(0, 0.02)`.

use rand::Rng;
use rand_distr::{Distribution, Normal};

pub fn uniform_fan_in<R: Rng>(rng: &mut R, fan_in: usize, n: usize) -> Vec<f64> {
    let bound = 1.0 / (fan_in as f64).sqrt();
    (0..n).map(|_| rng.gen_range(-bound..bound)).collect()
}

/// N(0, 2/fan_in) draws; preserves activation variance through a ReLU
/// stack, where [`uniform_fan_in`] attenuates ~6x per layer.
pub fn he_normal<R: Rng>(rng: &mut R, fan_in: usize, n: usize) -> Vec<f64> {
    normal(rng, (2.0 / fan_in as f64).sqrt(), n)
}

pub fn normal<R: Rng>(rng: &mut R, std: f64, n: usize) -> Vec<f64> {
    let dist = Normal::new(0.0, std).expect("valid std");
    (0..n).map(|_| dist.sample(rng)).collect()
}

pub fn zeros(n: usize) -> Vec<f64> {
    vec![0.0; n]
}

pub fn ones(n: usize) -> Vec<f64> {
    vec![1.0; n]
}
