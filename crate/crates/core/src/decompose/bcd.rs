//! Block elimination of the uncentered second-moment matrix.
//!
//! Features are rearranged block by block, `S̄ = X̃ X̃ᵀ` is formed, and block
//! row/column `i` is eliminated with the unit block-lower-triangular factor
//! `B_i` (identity plus `−A_ji A_ii⁻¹` below the diagonal block). The
//! transform is `B_h ⋯ B_1`, expressed on the original feature order.

use nalgebra::DMatrix;

use super::scatter::second_moment;
use super::{IndexGroups, Method, SubspaceDecomposition, Transform};
use crate::dataio::Dataset;
use crate::error::{Error, Result};
use crate::numerics::{Cholesky, SymMatrix};

fn pivot_factor(block: DMatrix<f64>, ridge: f64, block_index: usize) -> Result<Cholesky> {
    let sym = SymMatrix::from_upper(block)?;
    match Cholesky::new(&sym) {
        Ok(c) => Ok(c),
        Err(Error::NotPositiveDefinite { .. }) => Cholesky::new(&sym.shifted(ridge)).map_err(|_| {
            Error::Numeric(format!(
                "BCD pivot block {block_index} is singular even with ridge {ridge:e}"
            ))
        }),
        Err(e) => Err(e),
    }
}

pub fn fit_bcd(ds: &Dataset, blocks: &IndexGroups) -> Result<SubspaceDecomposition> {
    let m = ds.n_features();
    if blocks.dim() != m || !blocks.is_partition() {
        return Err(Error::Invalid(
            "BCD index groups must partition the feature space".into(),
        ));
    }
    let order: Vec<u32> = blocks.groups().iter().flatten().copied().collect();
    let mut position = vec![0u32; m];
    for (p, &f) in order.iter().enumerate() {
        position[f as usize] = p as u32;
    }
    let mut bounds = Vec::with_capacity(blocks.len() + 1);
    bounds.push(0);
    for g in blocks.groups() {
        bounds.push(bounds.last().unwrap() + g.len());
    }

    let moment = second_moment(ds.features(), None, Some(&position));
    let ridge = 1e-8 * moment.frobenius_norm() / m as f64;
    let mut s = moment.into_matrix();
    let mut w = DMatrix::<f64>::identity(m, m);
    let mut pivot_norms = Vec::with_capacity(blocks.len());

    for i in 0..blocks.len() {
        let (lo, hi) = (bounds[i], bounds[i + 1]);
        let b = hi - lo;
        let tail = m - hi;
        let a_ii = s.view((lo, lo), (b, b)).clone_owned();
        pivot_norms.push(a_ii.norm());
        if tail == 0 {
            break;
        }
        let chol = pivot_factor(a_ii.clone(), ridge, i)?;
        let t = s.view((hi, lo), (tail, b)).clone_owned();
        // L = T A_ii⁻¹  ⇔  A_ii Lᵀ = Tᵀ
        let l = chol.solve(&t.transpose()).transpose();

        // S ← B S Bᵀ restricted to the affected blocks.
        let la = &l * &a_ii;
        let new_off = &t - &la;
        let s_tt = s.view((hi, hi), (tail, tail)).clone_owned();
        let new_tt = s_tt - &l * t.transpose() - &t * l.transpose() + &la * l.transpose();
        s.view_mut((hi, lo), (tail, b)).copy_from(&new_off);
        s.view_mut((lo, hi), (b, tail)).copy_from(&new_off.transpose());
        s.view_mut((hi, hi), (tail, tail)).copy_from(&new_tt);

        // W ← B_i W; only the first `hi` columns of the pivot rows are nonzero.
        let w_piv = w.view((lo, 0), (b, hi)).clone_owned();
        let update = &l * w_piv;
        let mut w_tail = w.view_mut((hi, 0), (tail, hi));
        w_tail -= update;
    }

    // Column p of W acts on original feature order[p].
    let mut matrix = DMatrix::zeros(m, m);
    for (p, &f) in order.iter().enumerate() {
        matrix.set_column(f as usize, &w.column(p));
    }
    let groups = IndexGroups::new(
        m,
        (0..blocks.len())
            .map(|i| (bounds[i] as u32..bounds[i + 1] as u32).collect())
            .collect(),
    )?;
    Ok(SubspaceDecomposition {
        method: Method::Bcd,
        transform: Transform::Dense { matrix },
        groups,
        feature_order: Some(order),
        spectrum: pivot_norms,
    })
}

/// The transform in rearranged coordinates, `W_BCD` proper.
pub fn rearranged_factor(part: &SubspaceDecomposition) -> Option<DMatrix<f64>> {
    let (Transform::Dense { matrix }, Some(order)) = (&part.transform, &part.feature_order) else {
        return None;
    };
    let mut w = DMatrix::zeros(matrix.nrows(), order.len());
    for (p, &f) in order.iter().enumerate() {
        w.set_column(p, &matrix.column(f as usize));
    }
    Some(w)
}
