//! Block-diagonality residuals of fitted decompositions.

use nalgebra::DMatrix;

use super::abd::blocked_gram;
use super::bcd::rearranged_factor;
use super::scatter::{centered_scatter, second_moment};
use super::{IndexGroups, Method, SubspaceDecomposition, Transform};
use crate::dataio::SparseColumns;
use crate::error::Result;

/// Near-equal contiguous ranges, the first `dim % n` one longer.
fn contiguous_blocks(dim: usize, n: usize) -> Vec<std::ops::Range<usize>> {
    let (base, extra) = (dim / n, dim % n);
    let mut lo = 0;
    (0..n)
        .map(|i| {
            let hi = lo + base + usize::from(i < extra);
            let r = lo..hi;
            lo = hi;
            r
        })
        .collect()
}

fn off_block_norm(d: &DMatrix<f64>, blocks: &[std::ops::Range<usize>]) -> f64 {
    let mut owner = vec![0usize; d.nrows()];
    for (b, r) in blocks.iter().enumerate() {
        owner[r.clone()].iter_mut().for_each(|o| *o = b);
    }
    let mut sum = 0.0;
    for j in 0..d.ncols() {
        for i in 0..d.nrows() {
            if owner[i] != owner[j] {
                sum += d[(i, j)] * d[(i, j)];
            }
        }
    }
    sum.sqrt()
}

/// Off-block Frobenius norm of the transformed discriminant matrix relative
/// to the norm of the untransformed one.
///
/// PCA and DCA use the centered scatter with singleton blocks, BCD the
/// uncentered second moment with its elimination blocks, ABD the blocked
/// Gram of the transformed data. `None` for RD and for dense methods wider
/// than `max_dense`.
pub fn block_residual(
    part: &SubspaceDecomposition,
    x: &SparseColumns,
    max_dense: usize,
) -> Result<Option<f64>> {
    let m = part.input_dim();
    match part.method {
        Method::Rd => Ok(None),
        _ if m > max_dense && !matches!(part.transform, Transform::Blocked { .. }) => Ok(None),
        Method::Pca | Method::Dca => {
            let s = centered_scatter(x);
            let w = part.transform.to_dense();
            let d = &w * s.as_matrix() * w.transpose();
            let singletons: Vec<_> = (0..d.nrows()).map(|i| i..i + 1).collect();
            Ok(Some(off_block_norm(&d, &singletons) / s.frobenius_norm()))
        }
        Method::Bcd => {
            let (Some(order), Some(w)) = (&part.feature_order, rearranged_factor(part)) else {
                return Ok(None);
            };
            let mut position = vec![0u32; m];
            for (p, &f) in order.iter().enumerate() {
                position[f as usize] = p as u32;
            }
            let s = second_moment(x, None, Some(&position));
            let d = &w * s.as_matrix() * w.transpose();
            let blocks = contiguous_blocks(m, part.spectrum.len());
            Ok(Some(off_block_norm(&d, &blocks) / s.frobenius_norm()))
        }
        Method::Abd => {
            let Transform::Blocked { blocks, block_size, .. } = &part.transform else {
                return Ok(None);
            };
            let before = blocked_gram(x, blocks);
            let out_dim = part.transform.output_dim();
            let whole = IndexGroups::new(out_dim, vec![(0..out_dim as u32).collect()])?;
            let t = part.clone().with_groups(whole)?.apply(x)?.remove(0);
            let out_blocks: Vec<Vec<u32>> = (0..blocks.len())
                .map(|i| ((i * block_size) as u32..((i + 1) * block_size) as u32).collect())
                .collect();
            let after = blocked_gram(&t, &out_blocks);
            let singletons: Vec<_> = (0..after.nrows()).map(|i| i..i + 1).collect();
            Ok(Some(off_block_norm(&after, &singletons) / before.norm()))
        }
    }
}
