use super::ParameterVector;
use super::TrainConfig;
use crate::error::{Error, Result};

/// First/second moment estimates and step count.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

impl AdamState {
    pub fn new(dimension: usize) -> Self {
        Self {
            m: vec![0.0; dimension],
            v: vec![0.0; dimension],
            t: 0,
        }
    }
}

/// In-place bias-corrected Adam update.
pub(crate) fn adam_update(params: &mut [f64], grad: &[f64], state: &mut AdamState, config: &TrainConfig) {
    state.t += 1;
    let (b1, b2) = (config.adam_beta1, config.adam_beta2);
    let c1 = 1.0 - b1.powi(state.t as i32);
    let c2 = 1.0 - b2.powi(state.t as i32);
    for (((p, &g), m), v) in params
        .iter_mut()
        .zip(grad)
        .zip(state.m.iter_mut())
        .zip(state.v.iter_mut())
    {
        *m = b1 * *m + (1.0 - b1) * g;
        *v = b2 * *v + (1.0 - b2) * g * g;
        let m_hat = *m / c1;
        let v_hat = *v / c2;
        *p -= config.learning_rate * m_hat / (v_hat.sqrt() + config.adam_epsilon);
    }
}

/// One Adam step; returns the new parameters and state.
pub fn adam_step(
    params: &ParameterVector,
    grad: &ParameterVector,
    state: &AdamState,
    config: &TrainConfig,
) -> Result<(ParameterVector, AdamState)> {
    params.check_dim(grad)?;
    if state.m.len() != params.dimension() || state.v.len() != params.dimension() {
        return Err(Error::DimensionMismatch {
            expected: params.dimension(),
            actual: state.m.len(),
        });
    }
    let mut p = params.clone();
    let mut s = state.clone();
    adam_update(&mut p, grad, &mut s, config);
    Ok((p, s))
}
