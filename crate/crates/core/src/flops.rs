//! FLOPs accounting.
//!
//! Convention: a dense layer costs `2 * in * out` per sample forward; backward
//! costs twice the forward pass, so a training step costs three forwards.
//! Spectral scoring and the frozen reference model are not counted.

use serde::{Deserialize, Serialize};

pub const FLOPS_CONVENTION: &str =
    "forward = sum(2*in*out) per sample; backward = 2x forward; train = 3x forward; \
     spectral scoring and reference model excluded";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pass {
    Forward,
    Train,
}

pub fn forward_per_sample(layer_dims: &[usize]) -> u64 {
    layer_dims.windows(2).map(|w| 2 * w[0] as u64 * w[1] as u64).sum()
}

pub fn flops_for(layer_dims: &[usize], n_samples: usize, pass: Pass) -> u64 {
    let per_sample = match pass {
        Pass::Forward => forward_per_sample(layer_dims),
        Pass::Train => 3 * forward_per_sample(layer_dims),
    };
    per_sample * n_samples as u64
}

/// Running training-FLOPs total.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlopsLedger {
    pub per_sample_forward: u64,
    pub per_sample_backward: u64,
    pub cumulative: u64,
}

impl FlopsLedger {
    pub fn new(layer_dims: &[usize]) -> Self {
        let forward = forward_per_sample(layer_dims);
        Self { per_sample_forward: forward, per_sample_backward: 2 * forward, cumulative: 0 }
    }

    /// Cost of one training step on `n` samples.
    pub fn train_cost(&self, n: usize) -> u64 {
        (self.per_sample_forward + self.per_sample_backward) * n as u64
    }

    pub fn charge(&mut self, n: usize) -> u64 {
        let cost = self.train_cost(n);
        self.cumulative += cost;
        cost
    }
}
