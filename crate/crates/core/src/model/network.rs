//! Forward passes, losses and hand-derived gradients for both heads.

use serde::{Deserialize, Serialize};

use super::matrix::{axpy, dot, Matrix};
use super::params::ModelParams;
use crate::error::{Error, Result};
use crate::features::SparseVector;
use crate::taxonomy::{LabelMode, Target};

/// What a classifier head consumes for one utterance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelInput {
    /// Assembled feature vector (linear head).
    pub features: SparseVector,
    /// Token ids, already truncated (attention head).
    pub tokens: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Output {
    pub logits: Vec<f64>,
    pub probabilities: Vec<f64>,
}

/// `e^{x_i} / Σ_j e^{x_j}`, evaluated after subtracting the maximum.
pub fn softmax(x: &[f64]) -> Result<Vec<f64>> {
    if x.is_empty() {
        return Err(Error::Data("softmax of an empty vector".into()));
    }
    let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = x.iter().map(|v| (v - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    Ok(exps.into_iter().map(|e| e / sum).collect())
}

fn softmax_in_place(x: &mut [f64]) {
    let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in x.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in x.iter_mut() {
        *v /= sum;
    }
}

pub fn log_sum_exp(x: &[f64]) -> f64 {
    let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + x.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Intermediate values of the attention forward pass kept for backprop.
struct AttentionTrace {
    x: Vec<Vec<f64>>,
    q: Vec<Vec<f64>>,
    k: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    attention: Vec<Vec<f64>>,
    pooled: Vec<f64>,
}

fn attention_trace(
    embedding: &Matrix,
    query: &Matrix,
    key: &Matrix,
    value: &Matrix,
    tokens: &[usize],
) -> AttentionTrace {
    let d = embedding.cols;
    let n = tokens.len();
    let x: Vec<Vec<f64>> = tokens.iter().map(|&t| embedding.row(t).to_vec()).collect();
    let q: Vec<Vec<f64>> = x.iter().map(|r| query.vec_mul(r)).collect();
    let k: Vec<Vec<f64>> = x.iter().map(|r| key.vec_mul(r)).collect();
    let v: Vec<Vec<f64>> = x.iter().map(|r| value.vec_mul(r)).collect();
    let scale = 1.0 / (d as f64).sqrt();
    let attention: Vec<Vec<f64>> = q
        .iter()
        .map(|qi| {
            let mut row: Vec<f64> = k.iter().map(|kj| dot(qi, kj) * scale).collect();
            softmax_in_place(&mut row);
            row
        })
        .collect();
    let mut pooled = vec![0.0; d];
    if n > 0 {
        // mean over rows of attention · V
        let mut column_weight = vec![0.0; n];
        for row in &attention {
            for (j, a) in row.iter().enumerate() {
                column_weight[j] += a;
            }
        }
        for (j, vj) in v.iter().enumerate() {
            axpy(column_weight[j] / n as f64, vj, &mut pooled);
        }
    }
    AttentionTrace {
        x,
        q,
        k,
        v,
        attention,
        pooled,
    }
}

fn check_input(params: &ModelParams, input: &ModelInput) -> Result<()> {
    match params {
        ModelParams::Linear { weight, .. } => {
            if input.features.dim != weight.cols {
                return Err(Error::Dimension(format!(
                    "feature vector has {} dimensions, model expects {}",
                    input.features.dim, weight.cols
                )));
            }
            if input.features.entries.iter().any(|(i, _)| *i >= weight.cols) {
                return Err(Error::Dimension("feature index out of range".into()));
            }
        }
        ModelParams::Attention { embedding, .. } => {
            if let Some(t) = input.tokens.iter().find(|t| **t >= embedding.rows) {
                return Err(Error::Dimension(format!(
                    "token id {t} outside embedding table of {} rows",
                    embedding.rows
                )));
            }
        }
    }
    Ok(())
}

pub fn logits(params: &ModelParams, input: &ModelInput) -> Result<Vec<f64>> {
    check_input(params, input)?;
    Ok(match params {
        ModelParams::Linear { weight, bias } => {
            let mut z = bias.clone();
            for (l, zl) in z.iter_mut().enumerate() {
                let row = weight.row(l);
                *zl += input
                    .features
                    .entries
                    .iter()
                    .map(|&(i, x)| row[i] * x)
                    .sum::<f64>();
            }
            z
        }
        ModelParams::Attention {
            embedding,
            query,
            key,
            value,
            output,
            bias,
        } => {
            let trace = attention_trace(embedding, query, key, value, &input.tokens);
            let mut z = output.mul_vec(&trace.pooled);
            axpy(1.0, bias, &mut z);
            z
        }
    })
}

pub fn activate(logits: &[f64], mode: LabelMode) -> Result<Vec<f64>> {
    if mode.is_multi_label() {
        Ok(logits.iter().map(|z| sigmoid(*z)).collect())
    } else {
        softmax(logits)
    }
}

/// Logits plus per-label logistic probabilities (multi-label modes) or a
/// softmax distribution (single-label mode).
pub fn forward(params: &ModelParams, input: &ModelInput, mode: LabelMode) -> Result<Output> {
    let logits = logits(params, input)?;
    let probabilities = activate(&logits, mode)?;
    Ok(Output {
        logits,
        probabilities,
    })
}

/// Cross-entropy `-ln p(true)` for a single label, mean binary cross-entropy
/// over labels for multi-label targets.
pub fn loss_from_probabilities(probabilities: &[f64], target: &Target) -> f64 {
    match target {
        Target::Single(k) => -probabilities[*k].ln(),
        Target::Multi(y) => {
            let total: f64 = probabilities
                .iter()
                .zip(y)
                .map(|(&p, &t)| {
                    let mut l = 0.0;
                    if t != 0.0 {
                        l -= t * p.ln();
                    }
                    if t != 1.0 {
                        l -= (1.0 - t) * (1.0 - p).ln();
                    }
                    l
                })
                .sum();
            total / y.len() as f64
        }
    }
}

/// Same losses as [`loss_from_probabilities`], computed stably from logits.
pub fn loss_from_logits(logits: &[f64], target: &Target) -> f64 {
    match target {
        Target::Single(k) => log_sum_exp(logits) - logits[*k],
        Target::Multi(y) => {
            let total: f64 = logits
                .iter()
                .zip(y)
                .map(|(&z, &t)| z.max(0.0) - z * t + (-z.abs()).exp().ln_1p())
                .sum();
            total / y.len() as f64
        }
    }
}

fn check_target(target: &Target, labels: usize) -> Result<()> {
    match target {
        Target::Single(k) if *k >= labels => {
            Err(Error::Dimension(format!("class {k} outside {labels} labels")))
        }
        Target::Multi(y) if y.len() != labels => Err(Error::Dimension(format!(
            "target has {} labels, model has {labels}",
            y.len()
        ))),
        _ => Ok(()),
    }
}

/// Loss of one example; adds `scale · ∂loss/∂θ` into `grad`.
pub fn accumulate_gradient(
    params: &ModelParams,
    input: &ModelInput,
    target: &Target,
    scale: f64,
    grad: &mut ModelParams,
) -> Result<f64> {
    check_input(params, input)?;
    check_target(target, params.labels())?;
    match (params, grad) {
        (ModelParams::Linear { weight, bias }, ModelParams::Linear { weight: gw, bias: gb }) => {
            let z = logits(params, input)?;
            let loss = loss_from_logits(&z, target);
            let dz = logit_gradient(&z, target);
            for l in 0..bias.len() {
                let g = scale * dz[l];
                gb[l] += g;
                let row = gw.row_mut(l);
                for &(i, x) in &input.features.entries {
                    row[i] += g * x;
                }
            }
            debug_assert_eq!(weight.rows, bias.len());
            Ok(loss)
        }
        (
            ModelParams::Attention {
                embedding,
                query,
                key,
                value,
                output,
                bias,
            },
            ModelParams::Attention {
                embedding: g_embedding,
                query: g_query,
                key: g_key,
                value: g_value,
                output: g_output,
                bias: g_bias,
            },
        ) => {
            let trace = attention_trace(embedding, query, key, value, &input.tokens);
            let mut z = output.mul_vec(&trace.pooled);
            axpy(1.0, bias, &mut z);
            let loss = loss_from_logits(&z, target);
            let dz: Vec<f64> = logit_gradient(&z, target)
                .into_iter()
                .map(|g| g * scale)
                .collect();

            axpy(1.0, &dz, g_bias);
            for (l, &g) in dz.iter().enumerate() {
                axpy(g, &trace.pooled, g_output.row_mut(l));
            }
            let n = input.tokens.len();
            if n == 0 {
                return Ok(loss);
            }
            let d = embedding.cols;
            let scale_qk = 1.0 / (d as f64).sqrt();
            // every row of H receives dpooled / n
            let dh: Vec<f64> = output.t_mul_vec(&dz).into_iter().map(|g| g / n as f64).collect();
            let dh_dot_v: Vec<f64> = trace.v.iter().map(|vj| dot(&dh, vj)).collect();

            let mut dq = vec![vec![0.0; d]; n];
            let mut dk = vec![vec![0.0; d]; n];
            let mut dv = vec![vec![0.0; d]; n];
            for ((a, q_i), dq_i) in trace.attention.iter().zip(&trace.q).zip(dq.iter_mut()) {
                let weighted: f64 = a.iter().zip(&dh_dot_v).map(|(x, y)| x * y).sum();
                for j in 0..n {
                    dv[j].iter_mut().zip(&dh).for_each(|(o, h)| *o += a[j] * h);
                    let ds = a[j] * (dh_dot_v[j] - weighted) * scale_qk;
                    if ds != 0.0 {
                        axpy(ds, &trace.k[j], dq_i);
                        axpy(ds, q_i, &mut dk[j]);
                    }
                }
            }
            for t in 0..n {
                let x = &trace.x[t];
                for (r, &xr) in x.iter().enumerate() {
                    axpy(xr, &dq[t], g_query.row_mut(r));
                    axpy(xr, &dk[t], g_key.row_mut(r));
                    axpy(xr, &dv[t], g_value.row_mut(r));
                }
                let mut dx = query.mul_vec(&dq[t]);
                axpy(1.0, &key.mul_vec(&dk[t]), &mut dx);
                axpy(1.0, &value.mul_vec(&dv[t]), &mut dx);
                axpy(1.0, &dx, g_embedding.row_mut(input.tokens[t]));
            }
            Ok(loss)
        }
        _ => Err(Error::Dimension(
            "gradient buffer does not match model head".into(),
        )),
    }
}

fn logit_gradient(z: &[f64], target: &Target) -> Vec<f64> {
    match target {
        Target::Single(k) => {
            let mut p = z.to_vec();
            softmax_in_place(&mut p);
            p[*k] -= 1.0;
            p
        }
        Target::Multi(y) => {
            let n = y.len() as f64;
            z.iter().zip(y).map(|(&zl, &t)| (sigmoid(zl) - t) / n).collect()
        }
    }
}

/// Mean loss over the batch and its gradient with respect to every
/// parameter.
pub fn gradients(params: &ModelParams, batch: &[(&ModelInput, &Target)]) -> Result<(f64, ModelParams)> {
    if batch.is_empty() {
        return Err(Error::Data("empty batch".into()));
    }
    let mut grad = params.zeros_like();
    let scale = 1.0 / batch.len() as f64;
    let mut loss = 0.0;
    for (input, target) in batch {
        loss += accumulate_gradient(params, input, target, scale, &mut grad)?;
    }
    Ok((loss * scale, grad))
}

/// Mean loss of the batch without gradients.
pub fn batch_loss(params: &ModelParams, batch: &[(&ModelInput, &Target)]) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::Data("empty batch".into()));
    }
    let mut total = 0.0;
    for (input, target) in batch {
        check_target(target, params.labels())?;
        total += loss_from_logits(&logits(params, input)?, target);
    }
    Ok(total / batch.len() as f64)
}
