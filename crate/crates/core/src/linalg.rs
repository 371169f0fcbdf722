//! Small dense helpers over `nalgebra` used by the solvers.

use alloc::vec::Vec;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};

/// Relative pivot floor below which a symmetric matrix is treated as singular.
pub const PIVOT_RTOL: f64 = 1e-12;

/// Cholesky factor of a symmetric positive-definite matrix, rejecting
/// factorizations whose smallest squared pivot is below `PIVOT_RTOL` times
/// the largest diagonal entry.
pub struct SpdFactor {
    chol: Cholesky<f64, Dyn>,
}

impl SpdFactor {
    pub fn new(a: &DMatrix<f64>) -> Option<Self> {
        Self::with_tolerance(a, PIVOT_RTOL)
    }

    pub fn with_tolerance(a: &DMatrix<f64>, rtol: f64) -> Option<Self> {
        let n = a.nrows();
        if n == 0 {
            return None;
        }
        let scale = a.diagonal().iter().fold(0.0_f64, |m, &v| m.max(v));
        if !(scale > 0.0) {
            return None;
        }
        let chol = Cholesky::new(a.clone())?;
        let l = chol.l_dirty();
        let min_pivot = (0..n).map(|i| l[(i, i)] * l[(i, i)]).fold(f64::INFINITY, f64::min);
        if !(min_pivot > rtol * scale) {
            return None;
        }
        Some(SpdFactor { chol })
    }

    pub fn solve(&self, rhs: &DVector<f64>) -> DVector<f64> {
        self.chol.solve(rhs)
    }

    pub fn inverse(&self) -> DMatrix<f64> {
        self.chol.inverse()
    }
}

/// Principal submatrix `a[idx, idx]`.
pub fn principal(a: &DMatrix<f64>, idx: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(idx.len(), idx.len(), |r, c| a[(idx[r], idx[c])])
}

pub fn gather(v: &[f64], idx: &[usize]) -> DVector<f64> {
    DVector::from_iterator(idx.len(), idx.iter().map(|&j| v[j]))
}

/// Replace `a` by `(a + aᵀ)/2`.
pub fn symmetrize(a: &mut DMatrix<f64>) {
    let n = a.nrows();
    for r in 0..n {
        for c in (r + 1)..n {
            let v = 0.5 * (a[(r, c)] + a[(c, r)]);
            a[(r, c)] = v;
            a[(c, r)] = v;
        }
    }
}

/// Ascending eigenvalues of a symmetric matrix.
pub fn sym_eigenvalues(a: &DMatrix<f64>) -> Vec<f64> {
    let mut ev: Vec<f64> = SymmetricEigen::new(a.clone()).eigenvalues.iter().copied().collect();
    ev.sort_by(|x, y| x.total_cmp(y));
    ev
}

/// Spectral condition number of a symmetric PSD matrix; infinite when singular.
pub fn sym_condition(a: &DMatrix<f64>) -> f64 {
    let ev = sym_eigenvalues(a);
    let (lo, hi) = (ev[0], ev[ev.len() - 1]);
    if lo <= 0.0 {
        f64::INFINITY
    } else {
        hi / lo
    }
}

/// Solve a general square system by LU; `None` if singular.
pub fn lu_solve(a: &DMatrix<f64>, b: &DVector<f64>) -> Option<DVector<f64>> {
    let scale = a.amax();
    if !(scale > 0.0) {
        return None;
    }
    let lu = a.clone().lu();
    let u = lu.u();
    let min_pivot = u.diagonal().iter().fold(f64::INFINITY, |m, v| m.min(v.abs()));
    if min_pivot <= 1e-14 * scale {
        return None;
    }
    lu.solve(b)
}

pub fn lu_inverse(a: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let n = a.nrows();
    let scale = a.amax();
    if !(scale > 0.0) {
        return None;
    }
    let lu = a.clone().lu();
    let min_pivot = lu.u().diagonal().iter().fold(f64::INFINITY, |m, v| m.min(v.abs()));
    if min_pivot <= 1e-14 * scale {
        return None;
    }
    lu.solve(&DMatrix::identity(n, n))
}
