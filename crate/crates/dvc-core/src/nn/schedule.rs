//! Learning-rate schedule: constant base rates, then a linear decay to zero.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NetSide {
    Generator,
    Discriminator,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LrSchedule {
    pub base_lr_g: f64,
    pub base_lr_d: f64,
    /// Iteration at which decay begins.
    pub decay_start: usize,
    /// Length of the linear ramp down to zero.
    pub decay_len: usize,
}

impl Default for LrSchedule {
    fn default() -> Self {
        LrSchedule {
            base_lr_g: 2e-4,
            base_lr_d: 1e-4,
            decay_start: 200_000,
            decay_len: 200_000,
        }
    }
}

impl LrSchedule {
    /// Divide the iteration milestones by `scale` (for desk-scale runs);
    /// base rates are untouched.
    pub fn scaled(&self, scale: usize) -> LrSchedule {
        let s = scale.max(1);
        LrSchedule {
            base_lr_g: self.base_lr_g,
            base_lr_d: self.base_lr_d,
            decay_start: (self.decay_start / s).max(1),
            decay_len: (self.decay_len / s).max(1),
        }
    }
}

/// Learning rate at `iter`: base before `decay_start`, linear ramp to zero
/// over `decay_len`, zero afterwards.
pub fn lr_at(s: &LrSchedule, iter: usize, side: NetSide) -> f64 {
    let base = match side {
        NetSide::Generator => s.base_lr_g,
        NetSide::Discriminator => s.base_lr_d,
    };
    if iter < s.decay_start {
        base
    } else if iter < s.decay_start + s.decay_len {
        let done = (iter - s.decay_start) as f64;
        base * (1.0 - done / s.decay_len as f64)
    } else {
        0.0
    }
}
