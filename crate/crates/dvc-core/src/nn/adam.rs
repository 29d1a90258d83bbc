//! Adam with the GAN betas (beta1 = 0.5, beta2 = 0.999).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AdamState {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// First/second moments per parameter tensor.
    pub m: Vec<Vec<f32>>,
    pub v: Vec<Vec<f32>>,
    pub step: usize,
}

impl AdamState {
    pub fn new(param_sizes: &[usize]) -> Self {
        AdamState {
            beta1: 0.5,
            beta2: 0.999,
            eps: 1e-8,
            m: param_sizes.iter().map(|&n| vec![0.0; n]).collect(),
            v: param_sizes.iter().map(|&n| vec![0.0; n]).collect(),
            step: 0,
        }
    }
}

/// Bias-corrected Adam update in place. NaN/inf gradients abort with an
/// error so the training loop can stop at the last good checkpoint.
pub fn adam_step(
    params: &mut [&mut [f32]],
    grads: &[Vec<f32>],
    state: &mut AdamState,
    lr: f64,
) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.m.len() {
        return Err(Error::shape(
            "adam_step",
            format!(
                "{} params, {} grads, {} moment buffers",
                params.len(),
                grads.len(),
                state.m.len()
            ),
        ));
    }
    for (i, (p, g)) in params.iter().zip(grads).enumerate() {
        if p.len() != g.len() {
            return Err(Error::shape(
                "adam_step",
                format!("param {i}: {} values vs {} grads", p.len(), g.len()),
            ));
        }
        if g.iter().any(|v| !v.is_finite()) {
            return Err(Error::TrainAborted {
                iteration: state.step,
                reason: format!("non-finite gradient in parameter tensor {i}"),
            });
        }
    }
    state.step += 1;
    let t = state.step as i32;
    let (b1, b2) = (state.beta1, state.beta2);
    let bc1 = 1.0 - b1.powi(t);
    let bc2 = 1.0 - b2.powi(t);
    for i in 0..params.len() {
        let m = &mut state.m[i];
        let v = &mut state.v[i];
        let p = &mut params[i];
        let g = &grads[i];
        for j in 0..p.len() {
            let gj = g[j] as f64;
            let mj = b1 * m[j] as f64 + (1.0 - b1) * gj;
            let vj = b2 * v[j] as f64 + (1.0 - b2) * gj * gj;
            m[j] = mj as f32;
            v[j] = vj as f32;
            let m_hat = mj / bc1;
            let v_hat = vj / bc2;
            p[j] -= (lr * m_hat / (v_hat.sqrt() + state.eps)) as f32;
        }
    }
    Ok(())
}
