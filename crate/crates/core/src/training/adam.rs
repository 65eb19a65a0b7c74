use serde::{Deserialize, Serialize};

use super::TrainError;
use crate::model::ModelParams;
use crate::numerics::Real;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdamConfig {
    pub learning_rate: Real,
    pub beta1: Real,
    pub beta2: Real,
    pub eps: Real,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.001,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First and second moments per parameter array, in [`ModelParams::entries`] order.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub step: u64,
    pub m: Vec<Vec<Real>>,
    pub v: Vec<Vec<Real>>,
}

impl OptimizerState {
    pub fn new(params: &ModelParams) -> Self {
        let zeros: Vec<Vec<Real>> = params.entries().iter().map(|t| vec![0.0; t.len()]).collect();
        Self {
            step: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    /// True when the moment arrays line up with `params`.
    pub fn matches(&self, params: &ModelParams) -> bool {
        let entries = params.entries();
        self.m.len() == entries.len()
            && self.v.len() == entries.len()
            && entries
                .iter()
                .zip(self.m.iter().zip(&self.v))
                .all(|(t, (m, v))| m.len() == t.len() && v.len() == t.len())
    }
}

/// One bias-corrected Adam update. Gradients are checked for finiteness
/// before anything is modified.
pub fn adam_step(
    params: &mut ModelParams,
    grads: &[Vec<Real>],
    state: &mut OptimizerState,
    cfg: &AdamConfig,
) -> Result<(), TrainError> {
    if !state.matches(params) || grads.len() != state.m.len() {
        return Err(TrainError::Shape("optimizer state does not match parameters".into()));
    }
    let names = params.names();
    for ((g, name), m) in grads.iter().zip(&names).zip(&state.m) {
        if g.len() != m.len() {
            return Err(TrainError::Shape(format!("gradient for {name} has wrong length")));
        }
        if g.iter().any(|x| !x.is_finite()) {
            return Err(TrainError::NonFiniteGradient { name: name.clone() });
        }
    }
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - cfg.beta1.powi(t);
    let c2 = 1.0 - cfg.beta2.powi(t);
    for (((p, g), m), v) in params
        .entries_mut()
        .into_iter()
        .zip(grads)
        .zip(&mut state.m)
        .zip(&mut state.v)
    {
        for (((x, &g), m), v) in p.data_mut().iter_mut().zip(g).zip(m.iter_mut()).zip(v.iter_mut()) {
            *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
            *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
            let delta = cfg.learning_rate * (*m / c1) / ((*v / c2).sqrt() + cfg.eps);
            if delta != 0.0 {
                *x -= delta;
            }
        }
    }
    Ok(())
}
