use serde::{Deserialize, Serialize};

use crate::nn::model::{Gradients, ModelTensor};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamConfig {
    pub alpha: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            alpha: 0.001,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-7,
        }
    }
}

/// First and second moment estimates for one parameter array.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step: u64,
}

impl AdamState {
    pub fn new(len: usize) -> Self {
        AdamState {
            m: vec![0.0; len],
            v: vec![0.0; len],
            step: 0,
        }
    }
}

/// One Adam step with bias correction. Increments `state.step`.
pub fn adam_update(params: &mut [f64], grads: &[f64], state: &mut AdamState, hyper: &AdamConfig) {
    assert_eq!(params.len(), grads.len());
    assert_eq!(params.len(), state.m.len());
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - hyper.beta1.powi(t);
    let c2 = 1.0 - hyper.beta2.powi(t);
    for i in 0..params.len() {
        let g = grads[i];
        state.m[i] = hyper.beta1 * state.m[i] + (1.0 - hyper.beta1) * g;
        state.v[i] = hyper.beta2 * state.v[i] + (1.0 - hyper.beta2) * g * g;
        let m_hat = state.m[i] / c1;
        let v_hat = state.v[i] / c2;
        params[i] -= hyper.alpha * m_hat / (v_hat.sqrt() + hyper.epsilon);
    }
}

/// Adam state for every parameter array of a model.
#[derive(Debug, Clone)]
pub struct Adam {
    pub config: AdamConfig,
    states: Vec<AdamState>,
}

impl Adam {
    pub fn new(model: &ModelTensor, config: AdamConfig) -> Self {
        Adam {
            config,
            states: model.params().map(|t| AdamState::new(t.len())).collect(),
        }
    }

    pub fn step(&mut self, model: &mut ModelTensor, grads: &Gradients) {
        for ((p, g), s) in model.params_mut().zip(grads.iter()).zip(&mut self.states) {
            adam_update(p.values_mut(), g, s, &self.config);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_params() {
        let mut p = vec![0.3, -1.2, 4.0];
        let mut s = AdamState::new(3);
        adam_update(&mut p, &[0.0; 3], &mut s, &AdamConfig::default());
        assert_eq!(p, vec![0.3, -1.2, 4.0]);
        assert_eq!(s.step, 1);
    }

    #[test]
    fn first_step_moves_by_alpha() {
        let mut p = vec![1.0];
        let mut s = AdamState::new(1);
        adam_update(&mut p, &[1.0], &mut s, &AdamConfig::default());
        let want = 1.0 - 0.001 * 1.0 / (1.0 + 1e-7);
        assert!((p[0] - want).abs() < 1e-15);
    }

    #[test]
    fn two_steps_match_scripted_trace() {
        // Independent scalar trace, written out step by step.
        let (a, b1, b2, e) = (0.001f64, 0.9f64, 0.999f64, 1e-7f64);
        let gs = [[0.5, -2.0], [0.25, 3.0]];
        let mut want = [0.1f64, -0.7];
        for j in 0..2 {
            let (mut m, mut v) = (0.0f64, 0.0f64);
            for (t, g) in gs.iter().map(|g| g[j]).enumerate() {
                m = b1 * m + (1.0 - b1) * g;
                v = b2 * v + (1.0 - b2) * g * g;
                let mh = m / (1.0 - b1.powi(t as i32 + 1));
                let vh = v / (1.0 - b2.powi(t as i32 + 1));
                want[j] -= a * mh / (vh.sqrt() + e);
            }
        }
        let mut p = vec![0.1, -0.7];
        let mut s = AdamState::new(2);
        for g in gs {
            adam_update(&mut p, &g, &mut s, &AdamConfig::default());
        }
        for j in 0..2 {
            assert!((p[j] - want[j]).abs() < 1e-12);
        }
    }
}
