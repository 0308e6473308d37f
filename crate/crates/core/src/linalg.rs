//! Thin bridge to nalgebra for the dense factorizations the solvers need.

use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::{Array1, Array2};

use crate::error::{Error, Result};

pub(crate) fn to_na(a: &Array2<f64>) -> DMatrix<f64> {
    let (r, c) = a.dim();
    DMatrix::from_fn(r, c, |i, j| a[[i, j]])
}

pub(crate) fn from_na(m: &DMatrix<f64>) -> Array2<f64> {
    Array2::from_shape_fn((m.nrows(), m.ncols()), |(i, j)| m[(i, j)])
}

/// Relative pivot floor below which an SPD system is treated as singular.
const PIVOT_FLOOR: f64 = 1e-13;

/// Solve `A X = B` for symmetric positive definite `A` via Cholesky.
pub fn spd_solve(a: &Array2<f64>, b: &Array2<f64>) -> Result<Array2<f64>> {
    let n = a.nrows();
    if a.ncols() != n || b.nrows() != n {
        return Err(Error::Dimension(format!(
            "spd_solve: A is {:?}, B is {:?}",
            a.dim(),
            b.dim()
        )));
    }
    let max_diag = a.diag().iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let chol = nalgebra::Cholesky::new(to_na(a))
        .ok_or_else(|| Error::Singular("matrix is not positive definite".into()))?;
    let l = chol.l_dirty();
    for i in 0..n {
        if l[(i, i)] * l[(i, i)] <= PIVOT_FLOOR * max_diag.max(f64::MIN_POSITIVE) {
            return Err(Error::Singular(format!("pivot {i} vanishes")));
        }
    }
    Ok(from_na(&chol.solve(&to_na(b))))
}

/// Eigen-decomposition of a small symmetric matrix: `A = Q diag(vals) Qᵀ`.
pub fn symmetric_eigen(a: &Array2<f64>) -> (Array1<f64>, Array2<f64>) {
    let eig = SymmetricEigen::new(to_na(a));
    (
        Array1::from_iter(eig.eigenvalues.iter().copied()),
        from_na(&eig.eigenvectors),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn solves_small_spd_system() {
        let a = array![[4.0, 1.0], [1.0, 3.0]];
        let b = array![[1.0], [2.0]];
        let x = spd_solve(&a, &b).unwrap();
        let r = a.dot(&x) - &b;
        assert!(r.iter().all(|v| v.abs() < 1e-14));
    }

    #[test]
    fn rejects_singular() {
        let a = array![[1.0, 1.0], [1.0, 1.0]];
        let b = array![[1.0], [2.0]];
        assert!(matches!(spd_solve(&a, &b), Err(Error::Singular(_))));
    }

    #[test]
    fn eigen_reconstructs() {
        let a = array![[2.0, -1.0, 0.0], [-1.0, 2.0, -1.0], [0.0, -1.0, 2.0]];
        let (vals, q) = symmetric_eigen(&a);
        let rec = q.dot(&Array2::from_diag(&vals)).dot(&q.t());
        assert!((rec - &a).iter().all(|v| v.abs() < 1e-12));
    }
}
