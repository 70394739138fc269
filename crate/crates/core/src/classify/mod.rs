//! Local and global learners.

mod linear;
mod trbf;

use serde::{Deserialize, Serialize};

use crate::dataio::SparseColumns;
use crate::error::Result;

pub use linear::{objective, predict_linear, train_linear, LinearModel, DENSE_LIMIT};
pub use trbf::{
    intrinsic_dim, median_pairwise_distance, predict_trbf, train_trbf_krr, trbf_expand,
    truncated_kernel, TrbfMap, TrbfModel,
};

/// Instances used when estimating a default σ.
pub const SIGMA_SAMPLE: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LearnerKind {
    Linear,
    Trbf,
}

/// Learner hyperparameters. Absent values get data-scaled defaults:
/// `λ = 1e-3 · N` and `σ` = median pairwise distance on a seeded subsample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LearnerSpec {
    pub kind: LearnerKind,
    #[serde(default)]
    pub lambda: Option<f64>,
    #[serde(default)]
    pub sigma: Option<f64>,
    #[serde(default = "default_order")]
    pub order: usize,
}

fn default_order() -> usize {
    2
}

impl LearnerSpec {
    pub fn linear() -> Self {
        Self {
            kind: LearnerKind::Linear,
            lambda: None,
            sigma: None,
            order: default_order(),
        }
    }

    pub fn trbf(order: usize) -> Self {
        Self {
            kind: LearnerKind::Trbf,
            lambda: None,
            sigma: None,
            order,
        }
    }

    pub fn with_lambda(mut self, lambda: f64) -> Self {
        self.lambda = Some(lambda);
        self
    }

    pub fn lambda_for(&self, n: usize) -> f64 {
        self.lambda.unwrap_or(1e-3 * n as f64)
    }
}

/// A trained learner of either kind.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Model {
    Linear(LinearModel),
    Trbf(TrbfModel),
}

impl Model {
    pub fn train(
        spec: &LearnerSpec,
        x: &SparseColumns,
        y: &[f64],
        max_intrinsic_dim: usize,
        seed: u64,
    ) -> Result<Model> {
        let lambda = spec.lambda_for(x.len());
        match spec.kind {
            LearnerKind::Linear => Ok(Model::Linear(train_linear(x, y, lambda)?)),
            LearnerKind::Trbf => {
                let sigma = spec
                    .sigma
                    .unwrap_or_else(|| median_pairwise_distance(x, SIGMA_SAMPLE, seed));
                Ok(Model::Trbf(train_trbf_krr(
                    x,
                    y,
                    sigma,
                    spec.order,
                    lambda,
                    max_intrinsic_dim,
                )?))
            }
        }
    }

    pub fn predict(&self, x: &SparseColumns) -> Result<Vec<f64>> {
        match self {
            Model::Linear(m) => predict_linear(m, x),
            Model::Trbf(m) => predict_trbf(m, x),
        }
    }

    pub fn input_dim(&self) -> usize {
        match self {
            Model::Linear(m) => m.weights.len(),
            Model::Trbf(m) => m.input_dim,
        }
    }
}
