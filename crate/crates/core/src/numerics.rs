//! Dense symmetric kernels: eigendecomposition, the generalized symmetric
//! definite eigenproblem, and Cholesky-based SPD solves.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};

/// Dense symmetric matrix. Symmetry is exact: the lower triangle is always a
/// mirror of the upper one.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix(DMatrix<f64>);

impl SymMatrix {
    /// Mirrors the upper triangle of `m` into the lower one.
    pub fn from_upper(mut m: DMatrix<f64>) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::Dimension {
                expected: m.nrows(),
                found: m.ncols(),
            });
        }
        if m.nrows() == 0 {
            return Err(Error::Invalid("symmetric matrix of order 0".into()));
        }
        let n = m.nrows();
        for j in 0..n {
            for i in (j + 1)..n {
                m[(i, j)] = m[(j, i)];
            }
        }
        Ok(SymMatrix(m))
    }

    pub fn identity(n: usize) -> Self {
        SymMatrix(DMatrix::identity(n, n))
    }

    pub fn from_diagonal(d: &[f64]) -> Self {
        SymMatrix(DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(d)))
    }

    pub fn order(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.0
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.0.norm()
    }

    pub fn trace(&self) -> f64 {
        self.0.trace()
    }

    /// `self + shift · I`.
    pub fn shifted(&self, shift: f64) -> SymMatrix {
        let mut m = self.0.clone();
        for i in 0..m.nrows() {
            m[(i, i)] += shift;
        }
        SymMatrix(m)
    }

    fn check_finite(&self) -> Result<()> {
        if self.0.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(Error::Numeric("matrix has non-finite entries".into()))
        }
    }
}

/// Eigenpairs sorted by descending eigenvalue; column `k` of `vectors`
/// belongs to `values[k]`.
#[derive(Debug, Clone)]
pub struct EigResult {
    pub values: Vec<f64>,
    pub vectors: DMatrix<f64>,
}

/// Flips each column so its largest-magnitude entry is positive
/// (first index wins on ties).
fn canonicalize_signs(vectors: &mut DMatrix<f64>) {
    for mut col in vectors.column_iter_mut() {
        let mut best = 0;
        for (i, v) in col.iter().enumerate() {
            if v.abs() > col[best].abs() {
                best = i;
            }
        }
        if col[best] < 0.0 {
            col.neg_mut();
        }
    }
}

fn sorted_descending(values: &[f64], vectors: &DMatrix<f64>) -> EigResult {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    let values = order.iter().map(|&k| values[k]).collect();
    let vectors = DMatrix::from_fn(vectors.nrows(), order.len(), |i, j| vectors[(i, order[j])]);
    EigResult { values, vectors }
}

/// Symmetric eigendecomposition (Householder tridiagonalization + implicit QR).
pub fn sym_eig(a: &SymMatrix) -> Result<EigResult> {
    a.check_finite()?;
    let eig = SymmetricEigen::try_new(a.0.clone(), f64::EPSILON, 0)
        .ok_or_else(|| Error::Numeric("symmetric eigensolver did not converge".into()))?;
    let mut out = sorted_descending(eig.eigenvalues.as_slice(), &eig.eigenvectors);
    canonicalize_signs(&mut out.vectors);
    Ok(out)
}

/// Lower-triangular Cholesky factor `L` with `A = L Lᵀ`.
#[derive(Debug, Clone)]
pub struct Cholesky {
    l: DMatrix<f64>,
}

impl Cholesky {
    /// Fails when a pivot is not positive relative to the largest diagonal
    /// entry (`pivot ≤ n·ε·max_diag`).
    pub fn new(a: &SymMatrix) -> Result<Self> {
        a.check_finite()?;
        let n = a.order();
        let m = &a.0;
        let max_diag = (0..n).map(|i| m[(i, i)].abs()).fold(0.0, f64::max);
        let tol = n as f64 * f64::EPSILON * max_diag;
        let mut l = DMatrix::<f64>::zeros(n, n);
        for j in 0..n {
            let mut d = m[(j, j)];
            for k in 0..j {
                d -= l[(j, k)] * l[(j, k)];
            }
            if !(d > tol) {
                return Err(Error::NotPositiveDefinite { pivot: j });
            }
            let d = d.sqrt();
            l[(j, j)] = d;
            for i in (j + 1)..n {
                let mut s = m[(i, j)];
                for k in 0..j {
                    s -= l[(i, k)] * l[(j, k)];
                }
                l[(i, j)] = s / d;
            }
        }
        Ok(Cholesky { l })
    }

    pub fn factor(&self) -> &DMatrix<f64> {
        &self.l
    }

    /// Solves `L Y = B` in place.
    pub fn solve_lower_mut(&self, b: &mut DMatrix<f64>) {
        let n = self.l.nrows();
        for c in 0..b.ncols() {
            for i in 0..n {
                let mut s = b[(i, c)];
                for k in 0..i {
                    s -= self.l[(i, k)] * b[(k, c)];
                }
                b[(i, c)] = s / self.l[(i, i)];
            }
        }
    }

    /// Solves `Lᵀ Y = B` in place.
    pub fn solve_upper_mut(&self, b: &mut DMatrix<f64>) {
        let n = self.l.nrows();
        for c in 0..b.ncols() {
            for i in (0..n).rev() {
                let mut s = b[(i, c)];
                for k in (i + 1)..n {
                    s -= self.l[(k, i)] * b[(k, c)];
                }
                b[(i, c)] = s / self.l[(i, i)];
            }
        }
    }

    pub fn solve(&self, rhs: &DMatrix<f64>) -> DMatrix<f64> {
        let mut x = rhs.clone();
        self.solve_lower_mut(&mut x);
        self.solve_upper_mut(&mut x);
        x
    }
}

/// Solves `A X = rhs` for symmetric positive definite `A`.
pub fn solve_spd(a: &SymMatrix, rhs: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if rhs.nrows() != a.order() {
        return Err(Error::Dimension {
            expected: a.order(),
            found: rhs.nrows(),
        });
    }
    Ok(Cholesky::new(a)?.solve(rhs))
}

/// Generalized problem `S ν = λ B ν` with `B` SPD. Vectors are
/// `B`-orthonormal. `B` is reduced to `L Lᵀ`, the standard problem
/// `L⁻¹ S L⁻ᵀ` is solved, and vectors are mapped back through `L⁻ᵀ`.
pub fn gen_sym_eig(s: &SymMatrix, b: &SymMatrix) -> Result<EigResult> {
    if s.order() != b.order() {
        return Err(Error::Dimension {
            expected: s.order(),
            found: b.order(),
        });
    }
    s.check_finite()?;
    let chol = Cholesky::new(b).map_err(|e| match e {
        Error::NotPositiveDefinite { pivot } => Error::Numeric(format!(
            "right-hand matrix not positive definite at pivot {pivot}; increase the ridge"
        )),
        e => e,
    })?;
    // C = L⁻¹ S L⁻ᵀ
    let mut c = s.0.clone();
    chol.solve_lower_mut(&mut c);
    let mut c = c.transpose();
    chol.solve_lower_mut(&mut c);
    let reduced = SymMatrix::from_upper(c)?;
    let eig = sym_eig(&reduced)?;
    let mut vectors = eig.vectors;
    chol.solve_upper_mut(&mut vectors);
    canonicalize_signs(&mut vectors);
    Ok(EigResult {
        values: eig.values,
        vectors,
    })
}
