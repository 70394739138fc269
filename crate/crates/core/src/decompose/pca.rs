use super::scatter::centered_scatter;
use super::{check_dense_guard, seeded_groups, FitOptions, Method, SubspaceDecomposition, Transform};
use crate::dataio::Dataset;
use crate::error::Result;
use crate::numerics::sym_eig;

/// Rows of the transform are the eigenvectors of the row-centered scatter,
/// by descending eigenvalue. Groups are drawn over the rotated coordinates.
pub fn fit_pca(
    ds: &Dataset,
    n_subspaces: usize,
    group_size: usize,
    seed: u64,
    opts: &FitOptions,
) -> Result<SubspaceDecomposition> {
    let m = ds.n_features();
    check_dense_guard(Method::Pca, m, opts)?;
    let groups = seeded_groups(m, n_subspaces, group_size, seed)?;
    let scatter = centered_scatter(ds.features());
    let eig = sym_eig(&scatter)?;
    Ok(SubspaceDecomposition {
        method: Method::Pca,
        transform: Transform::Dense {
            matrix: eig.vectors.transpose(),
        },
        groups,
        feature_order: None,
        spectrum: eig.values,
    })
}
