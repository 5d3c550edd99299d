use super::params::{Gradients, Parameters};
use crate::error::{Error, Result};

/// Bias-corrected Adam moments for one parameter set.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub first: Vec<Vec<f64>>,
    pub second: Vec<Vec<f64>>,
    pub step: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamState {
    pub fn new(params: &Parameters) -> Self {
        Self::with_hyper(params, 0.9, 0.999, 1e-8)
    }

    pub fn with_hyper(params: &Parameters, beta1: f64, beta2: f64, epsilon: f64) -> Self {
        let zeros: Vec<Vec<f64>> = params
            .trainable()
            .iter()
            .map(|t| vec![0.0; t.len()])
            .collect();
        Self {
            first: zeros.clone(),
            second: zeros,
            step: 0,
            beta1,
            beta2,
            epsilon,
        }
    }
}

pub fn adam_step(
    params: &mut Parameters,
    grads: &Gradients,
    state: &mut AdamState,
    lr: f64,
) -> Result<()> {
    let grad_tensors = grads.trainable();
    let mut tensors = params.trainable_mut();
    if tensors.len() != grad_tensors.len()
        || tensors.len() != state.first.len()
        || tensors
            .iter()
            .zip(&grad_tensors)
            .zip(&state.first)
            .any(|((p, g), m)| p.len() != g.len() || p.len() != m.len())
    {
        return Err(Error::InvalidDimension(
            "parameters, gradients and optimizer state disagree in shape".into(),
        ));
    }
    state.step += 1;
    let t = state.step as i32;
    let (b1, b2, eps) = (state.beta1, state.beta2, state.epsilon);
    let correction1 = 1.0 - b1.powi(t);
    let correction2 = 1.0 - b2.powi(t);
    for (((p, g), m), v) in tensors
        .iter_mut()
        .zip(&grad_tensors)
        .zip(state.first.iter_mut())
        .zip(state.second.iter_mut())
    {
        for i in 0..p.len() {
            m[i] = b1 * m[i] + (1.0 - b1) * g[i];
            v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
            let m_hat = m[i] / correction1;
            let v_hat = v[i] / correction2;
            p[i] -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}
