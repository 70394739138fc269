//! Truncated-RBF kernel ridge regression in the finite intrinsic space.
//!
//! The map sends `x ∈ ℝᵐ` to the `J = C(m+p, p)` coordinates
//! `exp(−‖x‖²/2σ²) · Π_k (x_k/σ)^{a_k} / sqrt(Π_k a_k!)`, one per multi-index
//! `|a| ≤ p`, in graded lexicographic order. Its inner product is the RBF
//! kernel with the exponential series cut after degree `p`:
//! `φ(x)·φ(y) = exp(−(‖x‖²+‖y‖²)/2σ²) Σ_{k≤p} (x·y/σ²)^k / k!`.

use std::collections::HashMap;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataio::SparseColumns;
use crate::error::{Error, Result};
use crate::numerics::{solve_spd, SymMatrix};

const CHUNK: usize = 1024;

/// `C(m+p, p)`, or `None` on overflow.
pub fn intrinsic_dim(m: usize, p: usize) -> Option<usize> {
    let mut acc: u128 = 1;
    for k in 1..=p as u128 {
        acc = acc.checked_mul(m as u128 + k)? / k;
    }
    usize::try_from(acc).ok()
}

/// Precomputed monomial layout for one `(m, p)`.
#[derive(Debug, Clone)]
pub struct TrbfMap {
    input_dim: usize,
    sigma: f64,
    /// Per coordinate (after the constant): parent coordinate and variable.
    steps: Vec<(usize, usize)>,
    /// `1 / sqrt(Π a_k!)` per coordinate.
    scale: Vec<f64>,
}

fn multi_indices(m: usize, degree: usize, prefix: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
    if prefix.len() + 1 == m {
        prefix.push(degree as u32);
        out.push(prefix.clone());
        prefix.pop();
        return;
    }
    for first in (0..=degree).rev() {
        prefix.push(first as u32);
        multi_indices(m, degree - first, prefix, out);
        prefix.pop();
    }
}

impl TrbfMap {
    pub fn new(input_dim: usize, sigma: f64, order: usize) -> Result<Self> {
        if input_dim == 0 || order == 0 {
            return Err(Error::Invalid("TRBF needs m ≥ 1 and p ≥ 1".into()));
        }
        if !(sigma > 0.0) || !sigma.is_finite() {
            return Err(Error::Invalid(format!("TRBF σ must be positive, got {sigma}")));
        }
        let mut all = Vec::new();
        for degree in 0..=order {
            multi_indices(input_dim, degree, &mut Vec::new(), &mut all);
        }
        let position: HashMap<&[u32], usize> =
            all.iter().enumerate().map(|(k, a)| (a.as_slice(), k)).collect();
        let mut steps = Vec::with_capacity(all.len());
        let mut scale = Vec::with_capacity(all.len());
        for a in &all {
            let fact: f64 = a
                .iter()
                .map(|&e| (1..=e).map(f64::from).product::<f64>())
                .product();
            scale.push(1.0 / fact.sqrt());
            if let Some(var) = a.iter().rposition(|&e| e > 0) {
                let mut parent = a.clone();
                parent[var] -= 1;
                steps.push((position[parent.as_slice()], var));
            }
        }
        Ok(Self {
            input_dim,
            sigma,
            steps,
            scale,
        })
    }

    pub fn dim(&self) -> usize {
        self.scale.len()
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    /// Writes `φ(x)` into `out` (length `dim()`).
    pub fn expand_into(&self, x: &[f64], out: &mut [f64]) {
        let inv = 1.0 / self.sigma;
        let sq: f64 = x.iter().map(|v| v * v).sum();
        out[0] = 1.0;
        for (k, &(parent, var)) in self.steps.iter().enumerate() {
            out[k + 1] = out[parent] * x[var] * inv;
        }
        let envelope = (-sq / (2.0 * self.sigma * self.sigma)).exp();
        for (o, s) in out.iter_mut().zip(&self.scale) {
            *o *= envelope * s;
        }
    }

    pub fn expand(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.expand_into(x, &mut out);
        out
    }
}

/// Expansion of a single vector; see [`TrbfMap`] for the coordinate layout.
pub fn trbf_expand(x: &[f64], sigma: f64, order: usize) -> Result<Vec<f64>> {
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Invalid("non-finite TRBF input".into()));
    }
    Ok(TrbfMap::new(x.len(), sigma, order)?.expand(x))
}

/// The truncated kernel, evaluated directly.
pub fn truncated_kernel(x: &[f64], y: &[f64], sigma: f64, order: usize) -> f64 {
    let s2 = sigma * sigma;
    let xx: f64 = x.iter().map(|v| v * v).sum();
    let yy: f64 = y.iter().map(|v| v * v).sum();
    let t: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum::<f64>() / s2;
    let mut term = 1.0;
    let mut series = 1.0;
    for k in 1..=order {
        term *= t / k as f64;
        series += term;
    }
    (-(xx + yy) / (2.0 * s2)).exp() * series
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrbfModel {
    #[serde(with = "crate::hexfloat::scalar")]
    pub sigma: f64,
    pub order: usize,
    pub input_dim: usize,
    #[serde(with = "crate::hexfloat::vec")]
    pub weights: Vec<f64>,
    #[serde(with = "crate::hexfloat::scalar")]
    pub lambda: f64,
}

impl TrbfModel {
    pub fn intrinsic_dim(&self) -> usize {
        self.weights.len()
    }

    pub fn feature_map(&self) -> Result<TrbfMap> {
        TrbfMap::new(self.input_dim, self.sigma, self.order)
    }
}

/// `Z Zᵀ` and `Z y` over fixed instance chunks, summed in chunk order.
fn intrinsic_normal_equations(map: &TrbfMap, x: &SparseColumns, y: &[f64]) -> (DMatrix<f64>, DMatrix<f64>) {
    let j = map.dim();
    let m = x.dim();
    let idx: Vec<usize> = (0..x.len()).collect();
    let partials: Vec<(DMatrix<f64>, DMatrix<f64>)> = idx
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut z = DMatrix::zeros(j, chunk.len());
            let mut yc = DMatrix::zeros(chunk.len(), 1);
            for (c, &k) in chunk.iter().enumerate() {
                let dense = x.column(k).to_dense(m);
                map.expand_into(&dense, z.column_mut(c).as_mut_slice());
                yc[c] = y[k];
            }
            (&z * z.transpose(), &z * yc)
        })
        .collect();
    let mut gram = DMatrix::zeros(j, j);
    let mut rhs = DMatrix::zeros(j, 1);
    for (g, r) in partials {
        gram += g;
        rhs += r;
    }
    (gram, rhs)
}

/// Solves `(Z Zᵀ + λI) u = Z y` in the intrinsic space.
pub fn train_trbf_krr(
    x: &SparseColumns,
    y: &[f64],
    sigma: f64,
    order: usize,
    lambda: f64,
    max_intrinsic_dim: usize,
) -> Result<TrbfModel> {
    if x.len() != y.len() {
        return Err(Error::Dimension {
            expected: x.len(),
            found: y.len(),
        });
    }
    if !(lambda > 0.0) {
        return Err(Error::Invalid(format!("ridge λ must be positive, got {lambda}")));
    }
    let j = intrinsic_dim(x.dim(), order).unwrap_or(usize::MAX);
    if j > max_intrinsic_dim {
        return Err(Error::Guard(format!(
            "TRBF intrinsic dimension C({}+{order}, {order}) = {j} exceeds limit {max_intrinsic_dim}; \
             lower the order or fuse fewer inputs",
            x.dim()
        )));
    }
    let map = TrbfMap::new(x.dim(), sigma, order)?;
    let (mut gram, rhs) = intrinsic_normal_equations(&map, x, y);
    for i in 0..j {
        gram[(i, i)] += lambda;
    }
    let u = solve_spd(&SymMatrix::from_upper(gram)?, &rhs)?;
    Ok(TrbfModel {
        sigma,
        order,
        input_dim: x.dim(),
        weights: u.as_slice().to_vec(),
        lambda,
    })
}

pub fn predict_trbf(model: &TrbfModel, x: &SparseColumns) -> Result<Vec<f64>> {
    if x.dim() != model.input_dim {
        return Err(Error::Dimension {
            expected: model.input_dim,
            found: x.dim(),
        });
    }
    let map = model.feature_map()?;
    Ok(x
        .columns()
        .par_iter()
        .map_init(
            || vec![0.0; map.dim()],
            |buf, col| {
                map.expand_into(&col.to_dense(x.dim()), buf);
                buf.iter().zip(&model.weights).map(|(a, b)| a * b).sum()
            },
        )
        .collect())
}

/// Median pairwise Euclidean distance over a seeded subsample of at most
/// `max_sample` instances; `1.0` when every sampled distance is zero.
pub fn median_pairwise_distance(x: &SparseColumns, max_sample: usize, seed: u64) -> f64 {
    let mut idx: Vec<usize> = (0..x.len()).collect();
    if idx.len() > max_sample {
        idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        idx.truncate(max_sample);
        idx.sort_unstable();
    }
    let dense: Vec<Vec<f64>> = idx.iter().map(|&k| x.column(k).to_dense(x.dim())).collect();
    let mut dists = Vec::with_capacity(dense.len() * dense.len().saturating_sub(1) / 2);
    for a in 0..dense.len() {
        for b in (a + 1)..dense.len() {
            let d2: f64 = dense[a].iter().zip(&dense[b]).map(|(p, q)| (p - q).powi(2)).sum();
            dists.push(d2.sqrt());
        }
    }
    if dists.is_empty() {
        return 1.0;
    }
    dists.sort_by(f64::total_cmp);
    let mid = dists.len() / 2;
    let median = if dists.len() % 2 == 0 {
        0.5 * (dists[mid - 1] + dists[mid])
    } else {
        dists[mid]
    };
    if median > 0.0 {
        median
    } else {
        1.0
    }
}
