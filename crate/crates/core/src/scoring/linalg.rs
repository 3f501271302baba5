//! Symmetric positive-definite factorization and inversion.

use crate::matrix::Matrix;

/// Lower-triangular Cholesky factor `L` with `a = L Lᵀ`, or `None` when `a`
/// is not numerically positive definite.
pub fn cholesky(a: &Matrix) -> Option<Matrix> {
    let n = a.rows();
    debug_assert_eq!(n, a.cols());
    let mut l = Matrix::zeros(n, n);
    for j in 0..n {
        let lj = l.row(j)[..j].to_vec();
        let diag = a[(j, j)] - lj.iter().map(|v| v * v).sum::<f64>();
        if !(diag > 0.0) || !diag.is_finite() {
            return None;
        }
        let ljj = diag.sqrt();
        l[(j, j)] = ljj;
        for i in j + 1..n {
            let li = &l.row(i)[..j];
            let s: f64 = li.iter().zip(&lj).map(|(x, y)| x * y).sum();
            l[(i, j)] = (a[(i, j)] - s) / ljj;
        }
    }
    Some(l)
}

/// Inverse of `L Lᵀ` given its Cholesky factor, symmetrized.
pub fn cholesky_inverse(l: &Matrix) -> Matrix {
    let n = l.rows();
    // L⁻¹ by forward substitution, column by column of the identity
    let mut linv = Matrix::zeros(n, n);
    for c in 0..n {
        for i in c..n {
            let mut s = if i == c { 1.0 } else { 0.0 };
            for k in c..i {
                s -= l[(i, k)] * linv[(k, c)];
            }
            linv[(i, c)] = s / l[(i, i)];
        }
    }
    // A⁻¹ = L⁻ᵀ L⁻¹
    let mut inv = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let start = i.max(j);
            let mut s = 0.0;
            for k in start..n {
                s += linv[(k, i)] * linv[(k, j)];
            }
            inv[(i, j)] = s;
            inv[(j, i)] = s;
        }
    }
    inv
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn factor_and_invert_2x2() {
        let a = Matrix::from_rows(&[[4.0, 2.0], [2.0, 3.0]]).unwrap();
        let l = cholesky(&a).unwrap();
        assert_eq!(l[(0, 0)], 2.0);
        assert_eq!(l[(1, 0)], 1.0);
        assert!((l[(1, 1)] - 2f64.sqrt()).abs() < 1e-15);
        let inv = cholesky_inverse(&l);
        // det = 8, inverse = [[3, -2], [-2, 4]] / 8
        let want = [0.375, -0.25, -0.25, 0.5];
        for (g, w) in inv.as_slice().iter().zip(want) {
            assert!((g - w).abs() < 1e-15);
        }
    }

    #[test]
    fn indefinite_fails() {
        let a = Matrix::from_rows(&[[1.0, 2.0], [2.0, 1.0]]).unwrap();
        assert!(cholesky(&a).is_none());
        assert!(cholesky(&Matrix::zeros(2, 2)).is_none());
    }
}
