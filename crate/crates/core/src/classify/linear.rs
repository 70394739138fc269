//! Regularized least-squares classifier with an unpenalized bias.
//!
//! Minimizes `Σ (wᵀx_n + b − y_n)² + λ‖w‖²`. Eliminating `b` leaves
//! `(X_c X_cᵀ + λI) w = X_c y` on row-centered data, with `b = ȳ − wᵀμ`.
//! Small problems solve this by Cholesky; wide sparse ones by conjugate
//! gradients with implicit centering.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::dataio::SparseColumns;
use crate::decompose::scatter::second_moment;
use crate::error::{Error, Result};
use crate::numerics::{solve_spd, SymMatrix};

/// Widest subspace solved through dense normal equations.
pub const DENSE_LIMIT: usize = 2048;
const CG_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    #[serde(with = "crate::hexfloat::vec")]
    pub weights: Vec<f64>,
    #[serde(with = "crate::hexfloat::scalar")]
    pub bias: f64,
    #[serde(with = "crate::hexfloat::scalar")]
    pub lambda: f64,
}

fn check_inputs(x: &SparseColumns, y: &[f64], lambda: f64) -> Result<()> {
    if x.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if x.len() != y.len() {
        return Err(Error::Dimension {
            expected: x.len(),
            found: y.len(),
        });
    }
    if !(lambda > 0.0) || !lambda.is_finite() {
        return Err(Error::Invalid(format!("ridge λ must be positive, got {lambda}")));
    }
    if x.columns().iter().any(|c| c.values().iter().any(|v| !v.is_finite())) {
        return Err(Error::Invalid("non-finite feature value".into()));
    }
    Ok(())
}

pub fn train_linear(x: &SparseColumns, y: &[f64], lambda: f64) -> Result<LinearModel> {
    check_inputs(x, y, lambda)?;
    let n = x.len() as f64;
    let d = x.dim();
    let mean = x.row_means();
    let y_mean = y.iter().sum::<f64>() / n;

    // X_c y = X y − N μ ȳ
    let mut rhs = vec![0.0; d];
    for (col, &yk) in x.columns().iter().zip(y) {
        for (i, v) in col.iter() {
            rhs[i] += v * yk;
        }
    }
    for (r, m) in rhs.iter_mut().zip(&mean) {
        *r -= n * m * y_mean;
    }

    let weights = if d <= DENSE_LIMIT {
        let mut a = second_moment(x, None, None).into_matrix();
        for j in 0..d {
            for i in 0..=j {
                a[(i, j)] -= n * mean[i] * mean[j];
            }
            a[(j, j)] += lambda;
        }
        let a = SymMatrix::from_upper(a)?;
        solve_spd(&a, &DMatrix::from_column_slice(d, 1, &rhs))?
            .as_slice()
            .to_vec()
    } else {
        conjugate_gradient(x, &mean, lambda, &rhs)?
    };
    let bias = y_mean - weights.iter().zip(&mean).map(|(w, m)| w * m).sum::<f64>();
    Ok(LinearModel {
        weights,
        bias,
        lambda,
    })
}

/// `(X_c X_cᵀ + λI) v` without forming `X_c`.
fn normal_matvec(x: &SparseColumns, mean: &[f64], lambda: f64, v: &[f64], out: &mut [f64]) {
    let n = x.len() as f64;
    let mean_dot = mean.iter().zip(v).map(|(m, a)| m * a).sum::<f64>();
    out.iter_mut().zip(v).for_each(|(o, a)| *o = lambda * a);
    for col in x.columns() {
        let s = col.dot_dense(v);
        for (i, val) in col.iter() {
            out[i] += val * s;
        }
    }
    for (o, m) in out.iter_mut().zip(mean) {
        *o -= n * m * mean_dot;
    }
}

fn conjugate_gradient(x: &SparseColumns, mean: &[f64], lambda: f64, rhs: &[f64]) -> Result<Vec<f64>> {
    let d = rhs.len();
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(p, q)| p * q).sum::<f64>();
    let rhs_norm = dot(rhs, rhs).sqrt();
    let mut w = vec![0.0; d];
    if rhs_norm == 0.0 {
        return Ok(w);
    }
    let mut r = rhs.to_vec();
    let mut p = r.clone();
    let mut ap = vec![0.0; d];
    let mut rr = dot(&r, &r);
    let max_iter = 10 * d.max(100);
    for _ in 0..max_iter {
        if rr.sqrt() <= CG_TOL * rhs_norm {
            return Ok(w);
        }
        normal_matvec(x, mean, lambda, &p, &mut ap);
        let alpha = rr / dot(&p, &ap);
        for i in 0..d {
            w[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let rr_new = dot(&r, &r);
        let beta = rr_new / rr;
        for i in 0..d {
            p[i] = r[i] + beta * p[i];
        }
        rr = rr_new;
    }
    Err(Error::Numeric(format!(
        "conjugate gradients did not reach {CG_TOL:e} relative residual"
    )))
}

pub fn predict_linear(model: &LinearModel, x: &SparseColumns) -> Result<Vec<f64>> {
    if x.dim() != model.weights.len() {
        return Err(Error::Dimension {
            expected: model.weights.len(),
            found: x.dim(),
        });
    }
    Ok(x
        .columns()
        .iter()
        .map(|c| c.dot_dense(&model.weights) + model.bias)
        .collect())
}

/// `Σ (wᵀx_n + b − y_n)² + λ‖w‖²`.
pub fn objective(model: &LinearModel, x: &SparseColumns, y: &[f64]) -> Result<f64> {
    let scores = predict_linear(model, x)?;
    let loss: f64 = scores.iter().zip(y).map(|(s, t)| (s - t).powi(2)).sum();
    Ok(loss + model.lambda * model.weights.iter().map(|w| w * w).sum::<f64>())
}
