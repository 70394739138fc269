//! Feature-space decomposition.
//!
//! Each sub-method produces a [`SubspaceDecomposition`]: a linear transform of
//! the feature space plus index groups over the transformed coordinates.
//! A [`CompositeDecomposition`] stacks several of them; applying it yields one
//! data view per index group.

mod abd;
mod bcd;
mod dca;
mod diagnostics;
pub mod groups;
mod pca;
pub(crate) mod scatter;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataio::{Dataset, SparseColumns, SparseVec};
use crate::error::{Error, Result};

pub use abd::fit_abd;
pub use bcd::{fit_bcd, rearranged_factor};
pub use dca::{default_ridge, fit_dca};
pub use diagnostics::block_residual;
pub use groups::{fit_blocks_to_size, seeded_groups, seeded_partition, IndexGroups};
pub use pca::fit_pca;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Rd,
    Pca,
    Dca,
    Bcd,
    Abd,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Rd => "RD",
            Method::Pca => "PCA",
            Method::Dca => "DCA",
            Method::Bcd => "BCD",
            Method::Abd => "ABD",
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Linear map from the `M` input features to `M′` transformed coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Transform {
    /// Never materialized.
    Identity { dim: usize },
    /// `M′ × M` matrix acting on original feature order.
    Dense {
        #[serde(with = "crate::hexfloat::matrix")]
        matrix: DMatrix<f64>,
    },
    /// Block-Kronecker map: input block `j` is `blocks[j]` zero-padded to
    /// `block_size`; output block `i` is `Σ_j coefficients[i, j] · block_j`.
    Blocked {
        input_dim: usize,
        block_size: usize,
        blocks: Vec<Vec<u32>>,
        #[serde(with = "crate::hexfloat::matrix")]
        coefficients: DMatrix<f64>,
    },
}

impl Transform {
    pub fn input_dim(&self) -> usize {
        match self {
            Transform::Identity { dim } => *dim,
            Transform::Dense { matrix } => matrix.ncols(),
            Transform::Blocked { input_dim, .. } => *input_dim,
        }
    }

    pub fn output_dim(&self) -> usize {
        match self {
            Transform::Identity { dim } => *dim,
            Transform::Dense { matrix } => matrix.nrows(),
            Transform::Blocked {
                block_size, blocks, ..
            } => block_size * blocks.len(),
        }
    }

    /// Materializes the `M′ × M` matrix (small problems only).
    pub fn to_dense(&self) -> DMatrix<f64> {
        match self {
            Transform::Identity { dim } => DMatrix::identity(*dim, *dim),
            Transform::Dense { matrix } => matrix.clone(),
            Transform::Blocked {
                input_dim,
                block_size,
                blocks,
                coefficients,
            } => {
                let mut w = DMatrix::zeros(block_size * blocks.len(), *input_dim);
                for i in 0..blocks.len() {
                    for (j, block) in blocks.iter().enumerate() {
                        for (t, &f) in block.iter().enumerate() {
                            w[(i * block_size + t, f as usize)] = coefficients[(i, j)];
                        }
                    }
                }
                w
            }
        }
    }

    /// Transforms one instance. `scratch` must have length `output_dim()`
    /// and be all zeros; it is left zeroed.
    fn apply_one(&self, x: &SparseVec, scratch: &mut [f64], slot: &[(u32, u32)]) -> SparseVec {
        match self {
            Transform::Identity { .. } => x.clone(),
            Transform::Dense { matrix } => {
                for (f, v) in x.iter() {
                    for (s, w) in scratch.iter_mut().zip(matrix.column(f).iter()) {
                        *s += w * v;
                    }
                }
                let out = SparseVec::from_dense(scratch);
                scratch.iter_mut().for_each(|s| *s = 0.0);
                out
            }
            Transform::Blocked {
                block_size,
                coefficients,
                ..
            } => {
                let m = coefficients.nrows();
                let mut touched: Vec<usize> = Vec::new();
                for (f, v) in x.iter() {
                    let (j, t) = slot[f];
                    let (j, t) = (j as usize, t as usize);
                    for i in 0..m {
                        let c = i * block_size + t;
                        if scratch[c] == 0.0 {
                            touched.push(c);
                        }
                        scratch[c] += coefficients[(i, j)] * v;
                    }
                }
                touched.sort_unstable();
                touched.dedup();
                let mut out = SparseVec::new();
                for c in touched {
                    out.push_unchecked(c as u32, scratch[c]);
                    scratch[c] = 0.0;
                }
                out
            }
        }
    }

    /// Feature → (block, offset) table for `Blocked`; empty otherwise.
    fn slot_table(&self) -> Vec<(u32, u32)> {
        match self {
            Transform::Blocked {
                input_dim, blocks, ..
            } => {
                let mut slot = vec![(0, 0); *input_dim];
                for (j, block) in blocks.iter().enumerate() {
                    for (t, &f) in block.iter().enumerate() {
                        slot[f as usize] = (j as u32, t as u32);
                    }
                }
                slot
            }
            _ => Vec::new(),
        }
    }
}

/// One fitted sub-method.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubspaceDecomposition {
    pub method: Method,
    pub transform: Transform,
    pub groups: IndexGroups,
    /// Rearranged position → original feature (BCD and ABD); identity when absent.
    pub feature_order: Option<Vec<u32>>,
    /// Eigenvalues for PCA/DCA/ABD, Frobenius norms of the eliminated
    /// diagonal blocks for BCD, empty for RD.
    #[serde(with = "crate::hexfloat::vec")]
    pub spectrum: Vec<f64>,
}

impl SubspaceDecomposition {
    pub fn input_dim(&self) -> usize {
        self.transform.input_dim()
    }

    pub fn n_subspaces(&self) -> usize {
        self.groups.len()
    }

    /// Replaces the index groups (same transformed coordinate space).
    pub fn with_groups(mut self, groups: IndexGroups) -> Result<Self> {
        if groups.dim() != self.transform.output_dim() {
            return Err(Error::Dimension {
                expected: self.transform.output_dim(),
                found: groups.dim(),
            });
        }
        self.groups = groups;
        Ok(self)
    }

    /// One view per index group, in group order.
    pub fn apply(&self, x: &SparseColumns) -> Result<Vec<SparseColumns>> {
        if x.dim() != self.input_dim() {
            return Err(Error::Dimension {
                expected: self.input_dim(),
                found: x.dim(),
            });
        }
        let lookup = self.groups.inverse();
        let slot = self.transform.slot_table();
        let out_dim = self.transform.output_dim();
        let h = self.groups.len();
        let per_instance: Vec<Vec<SparseVec>> = x
            .columns()
            .par_iter()
            .map_init(
                || vec![0.0; if matches!(self.transform, Transform::Identity { .. }) { 0 } else { out_dim }],
                |scratch, col| {
                    let t = self.transform.apply_one(col, scratch, &slot);
                    let mut views = vec![SparseVec::new(); h];
                    for (c, v) in t.iter() {
                        for &(g, pos) in lookup.targets(c) {
                            views[g as usize].push_unchecked(pos, v);
                        }
                    }
                    views
                },
            )
            .collect();
        let mut views: Vec<Vec<SparseVec>> = vec![Vec::with_capacity(x.len()); h];
        for inst in per_instance {
            for (g, v) in inst.into_iter().enumerate() {
                views[g].push(v);
            }
        }
        Ok(views
            .into_iter()
            .enumerate()
            .map(|(g, cols)| SparseColumns::new_unchecked(self.groups.group(g).len(), cols))
            .collect())
    }
}

/// Identity transform with seeded groups over the raw features.
pub fn make_rd(
    n_features: usize,
    n_subspaces: usize,
    group_size: usize,
    seed: u64,
) -> Result<SubspaceDecomposition> {
    Ok(SubspaceDecomposition {
        method: Method::Rd,
        transform: Transform::Identity { dim: n_features },
        groups: seeded_groups(n_features, n_subspaces, group_size, seed)?,
        feature_order: None,
        spectrum: Vec::new(),
    })
}

/// Stacked sub-methods, applied in order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompositeDecomposition {
    input_dim: usize,
    parts: Vec<SubspaceDecomposition>,
}

pub fn compose(parts: Vec<SubspaceDecomposition>) -> Result<CompositeDecomposition> {
    let first = parts
        .first()
        .ok_or_else(|| Error::Invalid("a decomposition needs at least one part".into()))?;
    let input_dim = first.input_dim();
    if let Some(p) = parts.iter().find(|p| p.input_dim() != input_dim) {
        return Err(Error::Dimension {
            expected: input_dim,
            found: p.input_dim(),
        });
    }
    Ok(CompositeDecomposition { input_dim, parts })
}

impl CompositeDecomposition {
    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn parts(&self) -> &[SubspaceDecomposition] {
        &self.parts
    }

    /// Total subspace count `h`.
    pub fn h(&self) -> usize {
        self.parts.iter().map(SubspaceDecomposition::n_subspaces).sum()
    }

    /// Dimension of each subspace view, in output order.
    pub fn view_dims(&self) -> Vec<usize> {
        self.parts
            .iter()
            .flat_map(|p| p.groups.groups().iter().map(Vec::len))
            .collect()
    }

    /// Part order, then group order within each part.
    pub fn apply(&self, x: &SparseColumns) -> Result<Vec<SparseColumns>> {
        if x.dim() != self.input_dim {
            return Err(Error::Dimension {
                expected: self.input_dim,
                found: x.dim(),
            });
        }
        let mut views = Vec::with_capacity(self.h());
        for part in &self.parts {
            views.extend(part.apply(x)?);
        }
        Ok(views)
    }
}

/// One row of a decomposition plan.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanEntry {
    pub method: Method,
    pub n_subspaces: usize,
    pub group_size: usize,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct FitOptions {
    /// Dense `M × M` work (PCA, DCA, BCD) is refused above this feature count.
    pub max_dense_features: usize,
    /// DCA ridge; data-scaled default when absent.
    pub dca_ridge: Option<f64>,
    pub seed: u64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            max_dense_features: 4096,
            dca_ridge: None,
            seed: 0,
        }
    }
}

pub(crate) fn check_dense_guard(method: Method, dim: usize, opts: &FitOptions) -> Result<()> {
    if dim > opts.max_dense_features {
        return Err(Error::Guard(format!(
            "{method} needs dense {dim}×{dim} matrices (limit {}); use RD or ABD for this dataset",
            opts.max_dense_features
        )));
    }
    Ok(())
}

fn part_seed(seed: u64, index: usize) -> u64 {
    seed ^ (index as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Fits one plan entry. BCD and ABD use a seeded partition into
/// `n_subspaces` blocks as their block structure; their groups are then the
/// blocks resized to `group_size`.
pub fn fit_entry(
    ds: &Dataset,
    entry: &PlanEntry,
    opts: &FitOptions,
    seed: u64,
) -> Result<SubspaceDecomposition> {
    let m = ds.n_features();
    match entry.method {
        Method::Rd => make_rd(m, entry.n_subspaces, entry.group_size, seed),
        Method::Pca => fit_pca(ds, entry.n_subspaces, entry.group_size, seed, opts),
        Method::Dca => {
            let rho = opts.dca_ridge;
            fit_dca(ds, rho, entry.n_subspaces, entry.group_size, seed, opts)
        }
        Method::Bcd => {
            check_dense_guard(Method::Bcd, m, opts)?;
            let blocks = seeded_partition(m, entry.n_subspaces, seed)?;
            let part = fit_bcd(ds, &blocks)?;
            let resized = fit_blocks_to_size(&part.groups, entry.group_size, seed)?;
            part.with_groups(resized)
        }
        Method::Abd => {
            let blocks = seeded_partition(m, entry.n_subspaces, seed)?;
            let part = fit_abd(ds, &blocks, true)?;
            let resized = fit_blocks_to_size(&part.groups, entry.group_size, seed)?;
            part.with_groups(resized)
        }
    }
}

/// Fits every plan entry (concurrently) and stacks them in plan order.
pub fn fit_plan(
    ds: &Dataset,
    plan: &[PlanEntry],
    opts: &FitOptions,
) -> Result<(CompositeDecomposition, Vec<std::time::Duration>)> {
    let fitted: Vec<Result<(SubspaceDecomposition, std::time::Duration)>> = plan
        .par_iter()
        .enumerate()
        .map(|(k, entry)| {
            let start = std::time::Instant::now();
            let part = fit_entry(ds, entry, opts, part_seed(opts.seed, k))?;
            Ok((part, start.elapsed()))
        })
        .collect();
    let mut parts = Vec::with_capacity(plan.len());
    let mut times = Vec::with_capacity(plan.len());
    for f in fitted {
        let (p, t) = f?;
        parts.push(p);
        times.push(t);
    }
    Ok((compose(parts)?, times))
}
