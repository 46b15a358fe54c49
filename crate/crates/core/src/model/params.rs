use rand::Rng;
use serde::{Deserialize, Serialize};

use super::matrix::Matrix;
use super::Head;

/// Learned parameters. The same shape doubles as the gradient container.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "head", rename_all = "lowercase")]
pub enum ModelParams {
    Linear {
        /// labels × features
        weight: Matrix,
        bias: Vec<f64>,
    },
    Attention {
        /// token vocabulary × model width; the last row is the unknown token
        embedding: Matrix,
        query: Matrix,
        key: Matrix,
        value: Matrix,
        /// labels × model width
        output: Matrix,
        bias: Vec<f64>,
    },
}

/// Sizes needed to allocate parameters for either head.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelDims {
    pub features: usize,
    /// Number of token ids, including the unknown-token id.
    pub token_ids: usize,
    pub model_width: usize,
    pub labels: usize,
}

pub const INIT_RANGE: f64 = 0.05;

impl ModelParams {
    pub fn zeros(head: Head, dims: &ModelDims) -> Self {
        let d = dims.model_width;
        match head {
            Head::Linear => ModelParams::Linear {
                weight: Matrix::zeros(dims.labels, dims.features),
                bias: vec![0.0; dims.labels],
            },
            Head::Attention => ModelParams::Attention {
                embedding: Matrix::zeros(dims.token_ids, d),
                query: Matrix::zeros(d, d),
                key: Matrix::zeros(d, d),
                value: Matrix::zeros(d, d),
                output: Matrix::zeros(dims.labels, d),
                bias: vec![0.0; dims.labels],
            },
        }
    }

    /// Every parameter drawn uniformly from [-0.05, 0.05].
    pub fn random(head: Head, dims: &ModelDims, rng: &mut impl Rng) -> Self {
        let mut params = Self::zeros(head, dims);
        for tensor in params.tensors_mut() {
            for x in tensor.iter_mut() {
                *x = rng.random_range(-INIT_RANGE..=INIT_RANGE);
            }
        }
        params
    }

    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        for t in z.tensors_mut() {
            t.fill(0.0);
        }
        z
    }

    pub fn head(&self) -> Head {
        match self {
            ModelParams::Linear { .. } => Head::Linear,
            ModelParams::Attention { .. } => Head::Attention,
        }
    }

    pub fn labels(&self) -> usize {
        match self {
            ModelParams::Linear { bias, .. } | ModelParams::Attention { bias, .. } => bias.len(),
        }
    }

    /// Flat views over each tensor, in a fixed order.
    pub fn tensors(&self) -> Vec<&[f64]> {
        match self {
            ModelParams::Linear { weight, bias } => vec![&weight.data, bias],
            ModelParams::Attention {
                embedding,
                query,
                key,
                value,
                output,
                bias,
            } => vec![
                &embedding.data,
                &query.data,
                &key.data,
                &value.data,
                &output.data,
                bias,
            ],
        }
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        match self {
            ModelParams::Linear { weight, bias } => vec![&mut weight.data, bias],
            ModelParams::Attention {
                embedding,
                query,
                key,
                value,
                output,
                bias,
            } => vec![
                &mut embedding.data,
                &mut query.data,
                &mut key.data,
                &mut value.data,
                &mut output.data,
                bias,
            ],
        }
    }

    pub fn len(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn all_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|x| x.is_finite()))
    }

    pub fn norm(&self) -> f64 {
        self.tensors()
            .iter()
            .flat_map(|t| t.iter())
            .map(|x| x * x)
            .sum::<f64>()
            .sqrt()
    }

    /// `self += alpha · other`; shapes must match.
    pub fn add_scaled(&mut self, alpha: f64, other: &ModelParams) {
        for (a, b) in self.tensors_mut().into_iter().zip(other.tensors()) {
            super::matrix::axpy(alpha, b, a);
        }
    }

    pub fn get_flat(&self, mut index: usize) -> f64 {
        for t in self.tensors() {
            if index < t.len() {
                return t[index];
            }
            index -= t.len();
        }
        panic!("parameter index out of range")
    }

    pub fn set_flat(&mut self, mut index: usize, value: f64) {
        for t in self.tensors_mut() {
            if index < t.len() {
                t[index] = value;
                return;
            }
            index -= t.len();
        }
        panic!("parameter index out of range")
    }
}
