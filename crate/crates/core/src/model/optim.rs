use serde::{Deserialize, Serialize};

use super::params::ModelParams;
use super::TrainConfig;

/// Moment estimates and step counter for AdamW.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub step: u64,
    pub first_moment: ModelParams,
    pub second_moment: ModelParams,
}

impl AdamState {
    pub fn new(params: &ModelParams) -> Self {
        AdamState {
            step: 0,
            first_moment: params.zeros_like(),
            second_moment: params.zeros_like(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamWSettings {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub weight_decay: f64,
}

impl From<&TrainConfig> for AdamWSettings {
    fn from(c: &TrainConfig) -> Self {
        AdamWSettings {
            learning_rate: c.learning_rate,
            beta1: c.beta1,
            beta2: c.beta2,
            epsilon: c.adam_epsilon,
            weight_decay: c.weight_decay,
        }
    }
}

/// One AdamW update with bias correction. Weight decay is decoupled: the
/// parameter is first shrunk by `lr · wd`, then moved by the Adam step.
pub fn adamw_step(
    params: &mut ModelParams,
    grads: &ModelParams,
    state: &mut AdamState,
    settings: &AdamWSettings,
) {
    state.step += 1;
    let t = state.step as i32;
    let correction1 = 1.0 - settings.beta1.powi(t);
    let correction2 = 1.0 - settings.beta2.powi(t);
    let decay = 1.0 - settings.learning_rate * settings.weight_decay;

    let tensors = params
        .tensors_mut()
        .into_iter()
        .zip(grads.tensors())
        .zip(state.first_moment.tensors_mut())
        .zip(state.second_moment.tensors_mut());
    for (((p, g), m), v) in tensors {
        for i in 0..p.len() {
            m[i] = settings.beta1 * m[i] + (1.0 - settings.beta1) * g[i];
            v[i] = settings.beta2 * v[i] + (1.0 - settings.beta2) * g[i] * g[i];
            let m_hat = m[i] / correction1;
            let v_hat = v[i] / correction2;
            p[i] = p[i] * decay - settings.learning_rate * m_hat / (v_hat.sqrt() + settings.epsilon);
        }
    }
}
