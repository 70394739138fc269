use super::scatter::{centered_scatter, within_class_scatter};
use super::{check_dense_guard, seeded_groups, FitOptions, Method, SubspaceDecomposition, Transform};
use crate::dataio::{Dataset, Label};
use crate::error::{Error, Result};
use crate::numerics::{gen_sym_eig, SymMatrix};

/// `1e-3 · trace(S_w) / M`, falling back to the total scatter's trace (and
/// finally to `1e-12`) when the within-class scatter vanishes.
pub fn default_ridge(within: &SymMatrix, total: &SymMatrix) -> f64 {
    let m = within.order() as f64;
    let from_within = 1e-3 * within.trace() / m;
    if from_within > 0.0 {
        return from_within;
    }
    let from_total = 1e-3 * total.trace() / m;
    if from_total > 0.0 {
        from_total
    } else {
        1e-12
    }
}

/// Rows of the transform are the generalized eigenvectors of
/// `S̄ ν = λ (S_w + ρI) ν`, by descending λ.
pub fn fit_dca(
    ds: &Dataset,
    ridge: Option<f64>,
    n_subspaces: usize,
    group_size: usize,
    seed: u64,
    opts: &FitOptions,
) -> Result<SubspaceDecomposition> {
    let m = ds.n_features();
    check_dense_guard(Method::Dca, m, opts)?;
    let labels = ds.labels();
    if !labels.contains(&Label::Pos) || !labels.contains(&Label::Neg) {
        return Err(Error::Invalid("DCA needs instances of both classes".into()));
    }
    let groups = seeded_groups(m, n_subspaces, group_size, seed)?;
    let total = centered_scatter(ds.features());
    let within = within_class_scatter(ds.features(), labels);
    let rho = ridge.unwrap_or_else(|| default_ridge(&within, &total));
    if !(rho > 0.0) {
        return Err(Error::Invalid(format!("DCA ridge must be positive, got {rho}")));
    }
    let eig = gen_sym_eig(&total, &within.shifted(rho))?;
    Ok(SubspaceDecomposition {
        method: Method::Dca,
        transform: Transform::Dense {
            matrix: eig.vectors.transpose(),
        },
        groups,
        feature_order: None,
        spectrum: eig.values,
    })
}
