//! Central finite-difference verification of the analytic gradients.

use rand::Rng;
use serde::Serialize;

use super::network::{batch_loss, gradients, ModelInput};
use super::params::{ModelDims, ModelParams};
use super::Head;
use crate::error::Result;
use crate::features::SparseVector;
use crate::taxonomy::Target;

pub const FD_STEP: f64 = 1e-5;
/// Denominator floor for the relative error, so that gradients that are
/// zero up to rounding do not divide by ~0.
pub const RELATIVE_FLOOR: f64 = 1e-6;
pub const MAX_CHECK_PARAMS: usize = 200;

/// A tiny random model with a batch to differentiate.
#[derive(Debug, Clone)]
pub struct GradCheckCase {
    pub params: ModelParams,
    pub inputs: Vec<ModelInput>,
    pub targets: Vec<Target>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GradCheckOutcome {
    pub parameters: usize,
    pub max_relative_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradCheckSummary {
    pub head: Head,
    pub trials: usize,
    pub max_parameters: usize,
    pub max_relative_error: f64,
}

fn random_target(rng: &mut impl Rng, labels: usize, multi: bool) -> Target {
    if multi {
        Target::Multi(
            (0..labels)
                .map(|_| f64::from(u8::from(rng.random_bool(0.5))))
                .collect(),
        )
    } else {
        Target::Single(rng.random_range(0..labels))
    }
}

/// Draws a model of the given head with at most [`MAX_CHECK_PARAMS`]
/// parameters, a batch of one to four inputs and matching targets. Weights
/// are drawn from [-1, 1] so gradients are well away from zero.
pub fn random_case(head: Head, rng: &mut impl Rng) -> GradCheckCase {
    let labels = rng.random_range(2..=5);
    let multi = rng.random_bool(0.5);
    let dims = match head {
        Head::Linear => ModelDims {
            features: rng.random_range(2..=20),
            token_ids: 1,
            model_width: 1,
            labels,
        },
        Head::Attention => ModelDims {
            features: 0,
            token_ids: rng.random_range(2..=7),
            model_width: rng.random_range(2..=4),
            labels,
        },
    };
    let mut params = ModelParams::zeros(head, &dims);
    for tensor in params.tensors_mut() {
        for x in tensor.iter_mut() {
            *x = rng.random_range(-1.0..=1.0);
        }
    }
    debug_assert!(params.len() <= MAX_CHECK_PARAMS);

    let batch = rng.random_range(1..=4);
    let mut inputs = Vec::with_capacity(batch);
    let mut targets = Vec::with_capacity(batch);
    for _ in 0..batch {
        let features = match head {
            Head::Linear => {
                let mut entries = Vec::new();
                for i in 0..dims.features {
                    if rng.random_bool(0.6) {
                        entries.push((i, rng.random_range(-2.0..=2.0)));
                    }
                }
                SparseVector {
                    dim: dims.features,
                    entries,
                }
            }
            Head::Attention => SparseVector::zeros(0),
        };
        let tokens = match head {
            Head::Linear => Vec::new(),
            Head::Attention => (0..rng.random_range(1..=6))
                .map(|_| rng.random_range(0..dims.token_ids))
                .collect(),
        };
        inputs.push(ModelInput { features, tokens });
        targets.push(random_target(rng, labels, multi));
    }
    GradCheckCase {
        params,
        inputs,
        targets,
    }
}

/// `|a - n| / max(|a|, |n|, RELATIVE_FLOOR)`
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(RELATIVE_FLOOR)
}

/// Largest relative error between analytic and central-difference
/// gradients over every parameter of the case.
pub fn check_case(case: &GradCheckCase) -> Result<GradCheckOutcome> {
    let batch: Vec<(&ModelInput, &Target)> = case.inputs.iter().zip(&case.targets).collect();
    let (_, grad) = gradients(&case.params, &batch)?;
    let mut probe = case.params.clone();
    let mut worst = 0.0f64;
    for i in 0..probe.len() {
        let original = probe.get_flat(i);
        probe.set_flat(i, original + FD_STEP);
        let up = batch_loss(&probe, &batch)?;
        probe.set_flat(i, original - FD_STEP);
        let down = batch_loss(&probe, &batch)?;
        probe.set_flat(i, original);
        let numeric = (up - down) / (2.0 * FD_STEP);
        worst = worst.max(relative_error(grad.get_flat(i), numeric));
    }
    Ok(GradCheckOutcome {
        parameters: probe.len(),
        max_relative_error: worst,
    })
}

/// Runs `trials` random cases for `head`.
pub fn run_trials(head: Head, trials: usize, rng: &mut impl Rng) -> Result<GradCheckSummary> {
    let mut summary = GradCheckSummary {
        head,
        trials,
        max_parameters: 0,
        max_relative_error: 0.0,
    };
    for _ in 0..trials {
        let outcome = check_case(&random_case(head, rng))?;
        summary.max_parameters = summary.max_parameters.max(outcome.parameters);
        summary.max_relative_error = summary.max_relative_error.max(outcome.max_relative_error);
    }
    Ok(summary)
}
