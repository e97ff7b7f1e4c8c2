use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::graph::Gradients;
use super::params::ParameterSet;

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPSILON: f64 = 1e-8;

/// First and second moment estimates for every parameter.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new(params: &ParameterSet) -> Self {
        let zeros: Vec<Vec<f64>> = params.iter().map(|(_, t)| vec![0.0; t.len()]).collect();
        Self {
            step: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }
}

/// One bias-corrected Adam update. The step is refused, leaving parameters
/// and state untouched, if any gradient entry is NaN or infinite.
pub fn adam_step(
    params: &mut ParameterSet,
    grads: &Gradients,
    lr: f64,
    state: &mut AdamState,
) -> Result<()> {
    if grads.0.len() != params.len() || state.m.len() != params.len() {
        return Err(Error::numerical(format!(
            "gradient set has {} entries, parameter set {}",
            grads.0.len(),
            params.len()
        )));
    }
    if let Some(i) = grads.first_non_finite() {
        let name = params.iter().nth(i).map(|(n, _)| n.to_owned()).unwrap_or_default();
        return Err(Error::numerical(format!(
            "non-finite gradient for parameter `{name}` at step {}",
            state.step + 1
        )));
    }
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - BETA1.powi(t);
    let c2 = 1.0 - BETA2.powi(t);
    for (i, g) in grads.0.iter().enumerate() {
        let p = &mut params.get_mut(i).data;
        let (m, v) = (&mut state.m[i], &mut state.v[i]);
        for j in 0..p.len() {
            let gj = g.data[j];
            m[j] = BETA1 * m[j] + (1.0 - BETA1) * gj;
            v[j] = BETA2 * v[j] + (1.0 - BETA2) * gj * gj;
            let mh = m[j] / c1;
            let vh = v[j] / c2;
            p[j] -= lr * mh / (vh.sqrt() + EPSILON);
        }
    }
    Ok(())
}
