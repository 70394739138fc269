//! Dense second-moment matrices accumulated from sparse columns.
//!
//! Accumulation runs over fixed column chunks that are summed in chunk order,
//! so results do not depend on the worker count.

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::dataio::{Label, SparseColumns, SparseVec};
use crate::numerics::SymMatrix;

const CHUNK: usize = 4096;

fn chunk_len(dim: usize, n: usize) -> usize {
    if dim <= 512 {
        CHUNK
    } else {
        n.max(1)
    }
}

fn accumulate_upper(acc: &mut DMatrix<f64>, col: &SparseVec, remap: Option<&[u32]>) {
    let idx: Vec<usize> = match remap {
        Some(map) => col.indices().iter().map(|&i| map[i as usize] as usize).collect(),
        None => col.indices().iter().map(|&i| i as usize).collect(),
    };
    let vals = col.values();
    for a in 0..idx.len() {
        for b in 0..idx.len() {
            let (i, j) = (idx[a], idx[b]);
            if i <= j {
                acc[(i, j)] += vals[a] * vals[b];
            }
        }
    }
}

/// `Σ_n x_n x_nᵀ` over the selected columns. With `remap`, feature `f` is
/// placed at row/column `remap[f]`.
pub(crate) fn second_moment(
    x: &SparseColumns,
    members: Option<&[usize]>,
    remap: Option<&[u32]>,
) -> SymMatrix {
    let dim = x.dim();
    let all: Vec<usize>;
    let members = match members {
        Some(m) => m,
        None => {
            all = (0..x.len()).collect();
            &all
        }
    };
    let partials: Vec<DMatrix<f64>> = members
        .par_chunks(chunk_len(dim, members.len()))
        .map(|chunk| {
            let mut acc = DMatrix::zeros(dim, dim);
            for &k in chunk {
                accumulate_upper(&mut acc, x.column(k), remap);
            }
            acc
        })
        .collect();
    let mut total = DMatrix::zeros(dim, dim);
    for p in partials {
        total += p;
    }
    SymMatrix::from_upper(total).expect("square by construction")
}

fn mean_of(x: &SparseColumns, members: &[usize]) -> Vec<f64> {
    let mut mean = vec![0.0; x.dim()];
    for &k in members {
        for (i, v) in x.column(k).iter() {
            mean[i] += v;
        }
    }
    let n = members.len().max(1) as f64;
    mean.iter_mut().for_each(|m| *m /= n);
    mean
}

/// Subtracts `n · μ μᵀ` from a second-moment matrix.
fn center(moment: SymMatrix, mean: &[f64], n: usize) -> SymMatrix {
    let mut m = moment.into_matrix();
    let n = n as f64;
    for j in 0..mean.len() {
        for i in 0..=j {
            m[(i, j)] -= n * mean[i] * mean[j];
        }
    }
    SymMatrix::from_upper(m).expect("square by construction")
}

/// Row-centered scatter `X̃ X̃ᵀ` (total scatter about the grand mean).
pub(crate) fn centered_scatter(x: &SparseColumns) -> SymMatrix {
    let members: Vec<usize> = (0..x.len()).collect();
    let mean = mean_of(x, &members);
    center(second_moment(x, Some(&members), None), &mean, members.len())
}

/// Within-class scatter `Σ_l Σ_j (x_j − μ_l)(x_j − μ_l)ᵀ`.
pub(crate) fn within_class_scatter(x: &SparseColumns, labels: &[Label]) -> SymMatrix {
    let mut total = DMatrix::zeros(x.dim(), x.dim());
    for class in [Label::Pos, Label::Neg] {
        let members: Vec<usize> = (0..x.len()).filter(|&k| labels[k] == class).collect();
        if members.is_empty() {
            continue;
        }
        let mean = mean_of(x, &members);
        total += center(second_moment(x, Some(&members), None), &mean, members.len()).into_matrix();
    }
    SymMatrix::from_upper(total).expect("square by construction")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dense_oracle(rows: &[Vec<f64>]) -> DMatrix<f64> {
        let m = rows.len();
        let n = rows[0].len();
        let x = DMatrix::from_fn(m, n, |i, j| rows[i][j]);
        let mean = x.column_mean();
        let mut xc = x.clone();
        for mut c in xc.column_iter_mut() {
            c -= &mean;
        }
        &xc * xc.transpose()
    }

    #[test]
    fn centered_matches_dense() {
        let rows = vec![
            vec![1.0, 0.0, 3.0, -2.0, 0.5],
            vec![0.0, 0.0, 1.0, 1.0, 0.0],
            vec![2.0, -1.0, 0.0, 0.0, 4.0],
        ];
        let x = SparseColumns::from_dense_rows(&rows).unwrap();
        let s = centered_scatter(&x);
        assert!((s.as_matrix() - dense_oracle(&rows)).amax() < 1e-12);
    }

    #[test]
    fn remapped_moment_permutes() {
        let rows = vec![vec![1.0, 2.0], vec![3.0, 0.0]];
        let x = SparseColumns::from_dense_rows(&rows).unwrap();
        let s = second_moment(&x, None, Some(&[1, 0]));
        // row 0 = feature 1
        assert_eq!(s.as_matrix()[(0, 0)], 9.0);
        assert_eq!(s.as_matrix()[(1, 1)], 5.0);
        assert_eq!(s.as_matrix()[(0, 1)], 3.0);
    }

    #[test]
    fn within_class_of_singletons_is_zero() {
        let rows = vec![vec![1.0, 5.0], vec![-2.0, 3.0]];
        let x = SparseColumns::from_dense_rows(&rows).unwrap();
        let sw = within_class_scatter(&x, &[Label::Pos, Label::Neg]);
        assert!(sw.as_matrix().amax() < 1e-15);
    }
}
