use std::collections::BTreeMap;

use super::{ParameterSet, Tensor};

/// Bias-corrected Adam moments for every tensor of a [`ParameterSet`].
#[derive(Clone, Debug)]
pub struct AdamState {
    first: BTreeMap<String, Tensor>,
    second: BTreeMap<String, Tensor>,
    step: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    pub fn new(params: &ParameterSet) -> Self {
        let zeros: BTreeMap<String, Tensor> = params
            .iter()
            .map(|(k, v)| (k.to_string(), Tensor::zeros(v.shape())))
            .collect();
        Self {
            first: zeros.clone(),
            second: zeros,
            step: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }
}

/// One Adam update from the gradients currently held in `params`.
pub fn adam_step(params: &mut ParameterSet, state: &mut AdamState, lr: f64) {
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - state.beta1.powi(t);
    let c2 = 1.0 - state.beta2.powi(t);
    let names: Vec<String> = params.names().map(str::to_string).collect();
    for name in names {
        let (value, grad) = params.value_and_grad_mut(&name);
        let m = state.first.get_mut(&name).expect("moment per parameter");
        let v = state.second.get_mut(&name).expect("moment per parameter");
        for (((p, &g), mi), vi) in value
            .data_mut()
            .iter_mut()
            .zip(grad.data())
            .zip(m.data_mut())
            .zip(v.data_mut())
        {
            *mi = state.beta1 * *mi + (1.0 - state.beta1) * g;
            *vi = state.beta2 * *vi + (1.0 - state.beta2) * g * g;
            let m_hat = *mi / c1;
            let v_hat = *vi / c2;
            *p -= lr * m_hat / (v_hat.sqrt() + state.eps);
        }
    }
}
