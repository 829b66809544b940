use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::Tensor;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Moment estimates for a list of parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub step_count: u64,
    pub first_moment: Vec<Vec<f64>>,
    pub second_moment: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn for_shapes(lengths: impl IntoIterator<Item = usize>) -> Self {
        let lens: Vec<usize> = lengths.into_iter().collect();
        AdamState {
            step_count: 0,
            first_moment: lens.iter().map(|&n| vec![0.0; n]).collect(),
            second_moment: lens.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    /// One bias-corrected Adam update of `params` in place.
    pub fn apply(&mut self, config: &AdamConfig, params: &mut [&mut [f64]], grads: &[&[f64]]) -> Result<()> {
        if params.len() != self.first_moment.len() || grads.len() != params.len() {
            return Err(Error::Dimension {
                op: "adam_step",
                lhs: vec![params.len()],
                rhs: vec![self.first_moment.len(), grads.len()],
            });
        }
        for (i, (p, g)) in params.iter().zip(grads).enumerate() {
            if p.len() != self.first_moment[i].len() || g.len() != p.len() {
                return Err(Error::Dimension {
                    op: "adam_step",
                    lhs: vec![p.len()],
                    rhs: vec![self.first_moment[i].len(), g.len()],
                });
            }
        }
        self.step_count += 1;
        let t = self.step_count as f64;
        let c1 = 1.0 - libm::pow(config.beta1, t);
        let c2 = 1.0 - libm::pow(config.beta2, t);
        for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            let m = &mut self.first_moment[i];
            let v = &mut self.second_moment[i];
            for j in 0..p.len() {
                m[j] = config.beta1 * m[j] + (1.0 - config.beta1) * g[j];
                v[j] = config.beta2 * v[j] + (1.0 - config.beta2) * g[j] * g[j];
                let m_hat = m[j] / c1;
                let v_hat = v[j] / c2;
                p[j] -= config.lr * m_hat / (libm::sqrt(v_hat) + config.epsilon);
            }
        }
        Ok(())
    }
}

/// Adam over a fixed list of parameter tensors. Missing gradients count as
/// zero.
pub struct Adam {
    pub config: AdamConfig,
    pub state: AdamState,
    params: Vec<Tensor>,
}

impl Adam {
    pub fn new(config: AdamConfig, params: Vec<Tensor>) -> Self {
        let state = AdamState::for_shapes(params.iter().map(Tensor::numel));
        Adam {
            config,
            state,
            params,
        }
    }

    pub fn params(&self) -> &[Tensor] {
        &self.params
    }

    pub fn step(&mut self) -> Result<()> {
        let grads: Vec<Vec<f64>> = self
            .params
            .iter()
            .map(|p| p.grad().unwrap_or_else(|| vec![0.0; p.numel()]))
            .collect();
        let mut data: Vec<_> = self.params.iter().map(|p| p.data_mut()).collect();
        let mut slices: Vec<&mut [f64]> = data.iter_mut().map(|d| d.as_mut_slice()).collect();
        let grad_refs: Vec<&[f64]> = grads.iter().map(Vec::as_slice).collect();
        self.state.apply(&self.config, &mut slices, &grad_refs)
    }

    pub fn zero_grad(&self) {
        self.params.iter().for_each(Tensor::zero_grad);
    }
}
