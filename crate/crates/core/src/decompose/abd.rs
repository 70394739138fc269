//! Block-level orthogonal decorrelation.
//!
//! The blocked Gram matrix `G_ij = Σ (X_i ∘ X_j)` pairs equal-sized row
//! blocks offset by offset. Its eigenvectors define an `m × m` orthogonal
//! mixing `V`, and the transform replaces block `i` with `Σ_j V_ij X_j`,
//! i.e. `W = V ⊗ I_b`. Only `V` and the block layout are stored.

use nalgebra::DMatrix;
use rayon::prelude::*;

use super::{IndexGroups, Method, SubspaceDecomposition, Transform};
use crate::dataio::{Dataset, SparseColumns};
use crate::error::{Error, Result};
use crate::numerics::{sym_eig, SymMatrix};

const CHUNK: usize = 4096;

/// `G_ij = Σ_n Σ_t x_n[block_i[t]] · x_n[block_j[t]]`, with blocks
/// zero-padded to `block_size`.
pub fn blocked_gram(x: &SparseColumns, blocks: &[Vec<u32>]) -> DMatrix<f64> {
    let m = blocks.len();
    let mut slot = vec![(0u32, 0u32); x.dim()];
    for (j, block) in blocks.iter().enumerate() {
        for (t, &f) in block.iter().enumerate() {
            slot[f as usize] = (t as u32, j as u32);
        }
    }
    let partials: Vec<DMatrix<f64>> = x
        .columns()
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut g = DMatrix::zeros(m, m);
            let mut entries: Vec<(u32, u32, f64)> = Vec::new();
            for col in chunk {
                entries.clear();
                entries.extend(col.iter().map(|(f, v)| {
                    let (t, j) = slot[f];
                    (t, j, v)
                }));
                entries.sort_by_key(|&(t, j, _)| (t, j));
                for run in entries.chunk_by(|a, b| a.0 == b.0) {
                    for &(_, a, va) in run {
                        for &(_, b, vb) in run {
                            g[(a as usize, b as usize)] += va * vb;
                        }
                    }
                }
            }
            g
        })
        .collect();
    let mut g = DMatrix::zeros(m, m);
    for p in partials {
        g += p;
    }
    g
}

/// `blocks` must partition the feature space. With `pad`, unequal blocks
/// are zero-padded to the largest block size; without it they are an error.
pub fn fit_abd(ds: &Dataset, blocks: &IndexGroups, pad: bool) -> Result<SubspaceDecomposition> {
    let m_feat = ds.n_features();
    if blocks.dim() != m_feat || !blocks.is_partition() {
        return Err(Error::Invalid(
            "ABD index groups must partition the feature space".into(),
        ));
    }
    let block_size = blocks.groups().iter().map(Vec::len).max().unwrap_or(0);
    if !pad && blocks.groups().iter().any(|g| g.len() != block_size) {
        return Err(Error::Invalid(
            "ABD needs equal block sizes; enable padding".into(),
        ));
    }
    let layout: Vec<Vec<u32>> = blocks.groups().to_vec();
    let gram = SymMatrix::from_upper(blocked_gram(ds.features(), &layout))?;
    let eig = sym_eig(&gram)?;
    let m = layout.len();
    let groups = IndexGroups::new(
        m * block_size,
        (0..m)
            .map(|i| ((i * block_size) as u32..((i + 1) * block_size) as u32).collect())
            .collect(),
    )?;
    Ok(SubspaceDecomposition {
        method: Method::Abd,
        transform: Transform::Blocked {
            input_dim: m_feat,
            block_size,
            blocks: layout.clone(),
            coefficients: eig.vectors.transpose(),
        },
        groups,
        feature_order: Some(layout.into_iter().flatten().collect()),
        spectrum: eig.values,
    })
}
