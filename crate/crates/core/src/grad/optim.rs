use std::collections::BTreeMap;

use super::tensor::Tensor2;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 2e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
struct Moments {
    m: Tensor2,
    v: Tensor2,
}

/// Named trainable blocks with their Adam moments, plus non-trainable
/// buffers (batch-norm running statistics).
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamSet {
    blocks: BTreeMap<String, Tensor2>,
    moments: BTreeMap<String, Moments>,
    buffers: BTreeMap<String, Tensor2>,
    step: u64,
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Tensor2) {
        let name = name.into();
        let (r, c) = value.shape();
        self.moments.insert(
            name.clone(),
            Moments {
                m: Tensor2::zeros(r, c),
                v: Tensor2::zeros(r, c),
            },
        );
        self.blocks.insert(name, value);
    }

    pub fn insert_buffer(&mut self, name: impl Into<String>, value: Tensor2) {
        self.buffers.insert(name.into(), value);
    }

    pub fn get(&self, name: &str) -> Option<&Tensor2> {
        self.blocks.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor2> {
        self.blocks.get_mut(name)
    }

    pub fn buffer(&self, name: &str) -> Option<&Tensor2> {
        self.buffers.get(name)
    }

    pub fn blocks(&self) -> &BTreeMap<String, Tensor2> {
        &self.blocks
    }

    pub fn buffers(&self) -> &BTreeMap<String, Tensor2> {
        &self.buffers
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    /// Total trainable scalar count.
    pub fn num_values(&self) -> usize {
        self.blocks.values().map(|t| t.data().len()).sum()
    }

    /// Overwrites buffers with values queued on a tape.
    pub fn commit_buffers(&mut self, updates: Vec<(String, Tensor2)>) {
        for (name, value) in updates {
            self.buffers.insert(name, value);
        }
    }

    /// One bias-corrected Adam update. Blocks without an entry in `grads`
    /// are left untouched, but the shared step counter still advances.
    pub fn adam_step(
        &mut self,
        grads: &BTreeMap<String, Tensor2>,
        cfg: &AdamConfig,
    ) -> Result<()> {
        for (name, g) in grads {
            let block = self
                .blocks
                .get(name)
                .ok_or_else(|| Error::shape("adam_step", format!("no block named {name}")))?;
            if block.shape() != g.shape() {
                return Err(Error::shape(
                    "adam_step",
                    format!("{name}: block {:?} vs grad {:?}", block.shape(), g.shape()),
                ));
            }
        }
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - cfg.beta1.powi(t);
        let bc2 = 1.0 - cfg.beta2.powi(t);
        for (name, g) in grads {
            let block = self.blocks.get_mut(name).expect("checked above");
            let mom = self.moments.get_mut(name).expect("moments track blocks");
            let it = block
                .data_mut()
                .iter_mut()
                .zip(mom.m.data_mut().iter_mut())
                .zip(mom.v.data_mut().iter_mut())
                .zip(g.data());
            for (((p, m), v), &gi) in it {
                *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * gi;
                *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * gi * gi;
                let mhat = *m / bc1;
                let vhat = *v / bc2;
                *p -= cfg.lr * mhat / (vhat.sqrt() + cfg.eps);
            }
        }
        Ok(())
    }
}
