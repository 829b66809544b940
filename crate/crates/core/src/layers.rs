//! Parameter initialization and the affine layer shared by encoder and scorer.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::{Result, Tensor};

/// Standard deviation of embedding-table initialization.
pub const EMBEDDING_STD: f64 = 0.02;

/// Every parameter draws from its own stream, derived from the model seed
/// and the parameter name, so adding a parameter never shifts the others.
pub fn param_rng(seed: u64, name: &str) -> ChaCha8Rng {
    // FNV-1a over the name, mixed with the seed.
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in name.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    ChaCha8Rng::seed_from_u64(h ^ seed.wrapping_mul(0x9e37_79b9_7f4a_7c15))
}

pub fn normal_param(seed: u64, name: &str, shape: &[usize], std: f64) -> Result<Tensor> {
    let mut rng = param_rng(seed, name);
    let dist = Normal::new(0.0, std).expect("positive std");
    let n = shape.iter().product();
    Tensor::parameter(shape, (0..n).map(|_| dist.sample(&mut rng)).collect())
}

/// Glorot-uniform initialization for a `(fan_in, fan_out)`-like shape.
pub fn xavier_param(seed: u64, name: &str, shape: &[usize], fan_in: usize, fan_out: usize) -> Result<Tensor> {
    let mut rng = param_rng(seed, name);
    let limit = libm::sqrt(6.0 / (fan_in + fan_out) as f64);
    let n = shape.iter().product();
    Tensor::parameter(shape, (0..n).map(|_| rng.random_range(-limit..limit)).collect())
}

pub fn zeros_param(shape: &[usize]) -> Tensor {
    let n = shape.iter().product();
    Tensor::parameter(shape, alloc::vec![0.0; n]).expect("consistent shape")
}

pub fn ones_param(shape: &[usize]) -> Tensor {
    let n = shape.iter().product();
    Tensor::parameter(shape, alloc::vec![1.0; n]).expect("consistent shape")
}

/// `y = x · W + b` with `W` stored as `(in, out)`.
#[derive(Debug, Clone)]
pub struct Linear {
    pub weight: Tensor,
    pub bias: Option<Tensor>,
}

impl Linear {
    pub fn new(seed: u64, name: &str, d_in: usize, d_out: usize) -> Result<Self> {
        Ok(Linear {
            weight: xavier_param(seed, &format!("{name}.weight"), &[d_in, d_out], d_in, d_out)?,
            bias: Some(zeros_param(&[d_out])),
        })
    }

    pub fn without_bias(seed: u64, name: &str, d_in: usize, d_out: usize) -> Result<Self> {
        Ok(Linear {
            weight: xavier_param(seed, &format!("{name}.weight"), &[d_in, d_out], d_in, d_out)?,
            bias: None,
        })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let y = x.matmul(&self.weight)?;
        match &self.bias {
            Some(b) => y.add_broadcast(b),
            None => Ok(y),
        }
    }

    pub fn d_in(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn collect(&self, prefix: &str, out: &mut Vec<(String, Tensor)>) {
        out.push((format!("{prefix}.weight"), self.weight.clone()));
        if let Some(b) = &self.bias {
            out.push((format!("{prefix}.bias"), b.clone()));
        }
    }
}
