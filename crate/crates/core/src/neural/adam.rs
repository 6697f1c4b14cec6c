use crate::{Error, Result};

use super::weights::{Gradients, WeightStore};

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new(store: &WeightStore) -> Self {
        let zeros: Vec<Vec<f64>> = store.tensors().iter().map(|t| vec![0.0; t.data.len()]).collect();
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }
}

/// One bias-corrected Adam update. A non-finite gradient aborts before any
/// weight is touched.
pub fn adam_step(store: &mut WeightStore, grads: &Gradients, state: &mut AdamState, lr: f64) -> Result<()> {
    if let Some((t, i)) = grads.first_non_finite() {
        let name = &store.tensors()[t].name;
        return Err(Error::Training(format!(
            "non-finite gradient {} at {name}[{i}] (step {})",
            grads.data[t][i],
            state.step + 1
        )));
    }
    state.step += 1;
    let bc1 = 1.0 - state.beta1.powi(state.step as i32);
    let bc2 = 1.0 - state.beta2.powi(state.step as i32);
    let (b1, b2, eps) = (state.beta1, state.beta2, state.eps);
    for (t, g) in grads.data.iter().enumerate() {
        let w = store.get_mut(super::weights::ParamId(t));
        let (m, v) = (&mut state.m[t], &mut state.v[t]);
        for i in 0..g.len() {
            m[i] = b1 * m[i] + (1.0 - b1) * g[i];
            v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
            let m_hat = m[i] / bc1;
            let v_hat = v[i] / bc2;
            w[i] -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}
