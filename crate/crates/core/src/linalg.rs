//! Small dense complex linear algebra on top of nalgebra.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use thiserror::Error;

pub type CMatrix = DMatrix<Complex64>;
pub type CVector = DVector<Complex64>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LinalgError {
    #[error("matrix is singular to working precision")]
    Singular,
    #[error("condition number {cond:.3e} exceeds the limit {limit:.1e}")]
    IllConditioned { cond: f64, limit: f64 },
}

fn norm1(a: &CMatrix) -> f64 {
    a.column_iter()
        .map(|c| c.iter().map(|z| z.norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// LU factorisation with partial pivoting plus the 1-norm condition number.
#[derive(Debug, Clone)]
pub struct Factorized {
    matrix: CMatrix,
    lu: nalgebra::LU<Complex64, nalgebra::Dyn, nalgebra::Dyn>,
    cond: f64,
}

impl Factorized {
    pub fn new(matrix: CMatrix) -> Result<Self, LinalgError> {
        let lu = matrix.clone().lu();
        let n = matrix.nrows();
        let inv = lu.try_inverse().ok_or(LinalgError::Singular)?;
        let cond = if n == 0 { 1.0 } else { norm1(&matrix) * norm1(&inv) };
        if !cond.is_finite() {
            return Err(LinalgError::Singular);
        }
        Ok(Self { matrix, lu, cond })
    }

    /// Like [`Factorized::new`] but refuses when the condition number exceeds `limit`.
    pub fn with_limit(matrix: CMatrix, limit: f64) -> Result<Self, LinalgError> {
        let f = Self::new(matrix)?;
        if f.cond > limit {
            return Err(LinalgError::IllConditioned {
                cond: f.cond,
                limit,
            });
        }
        Ok(f)
    }

    pub fn cond(&self) -> f64 {
        self.cond
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    /// Solves `A x = b` with one step of iterative refinement.
    pub fn solve(&self, b: &[Complex64]) -> Vec<Complex64> {
        let rhs = CVector::from_column_slice(b);
        let mut x = self.lu.solve(&rhs).expect("factorisation checked non-singular");
        let r = &rhs - &self.matrix * &x;
        if let Some(dx) = self.lu.solve(&r) {
            x += dx;
        }
        x.iter().copied().collect()
    }

    /// Relative residual `||A x - b|| / ||b||` in the 2-norm.
    pub fn residual(&self, x: &[Complex64], b: &[Complex64]) -> f64 {
        let xv = CVector::from_column_slice(x);
        let bv = CVector::from_column_slice(b);
        let r = &self.matrix * xv - &bv;
        let nb = bv.norm();
        if nb == 0.0 {
            r.norm()
        } else {
            r.norm() / nb
        }
    }
}

/// Eigenvalues of a small complex matrix.
pub fn eigenvalues(a: &CMatrix) -> Vec<Complex64> {
    if a.nrows() == 0 {
        return Vec::new();
    }
    a.clone()
        .schur()
        .eigenvalues()
        .map(|v| v.iter().copied().collect())
        .unwrap_or_default()
}

/// Singular values, largest first.
pub fn singular_values(a: &CMatrix) -> Vec<f64> {
    if a.nrows() == 0 {
        return Vec::new();
    }
    let mut s: Vec<f64> = a.clone().svd(false, false).singular_values.iter().copied().collect();
    s.sort_by(|x, y| y.partial_cmp(x).unwrap());
    s
}

/// Frobenius norm.
pub fn frobenius(a: &CMatrix) -> f64 {
    a.norm()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn solve_and_condition() {
        let a = CMatrix::from_row_slice(2, 2, &[c(2.0, 0.0), c(0.0, 1.0), c(1.0, -1.0), c(3.0, 0.5)]);
        let f = Factorized::new(a.clone()).unwrap();
        let b = [c(1.0, 0.0), c(0.0, 2.0)];
        let x = f.solve(&b);
        assert!(f.residual(&x, &b) < 1e-15);
        assert!(f.cond() >= 1.0);
        let diag = CMatrix::from_diagonal(&CVector::from_vec(vec![c(1.0, 0.0), c(1e-3, 0.0)]));
        let g = Factorized::new(diag.clone()).unwrap();
        assert!((g.cond() - 1e3).abs() < 1e-9);
        assert!(matches!(Factorized::with_limit(diag, 10.0), Err(LinalgError::IllConditioned { .. })));
        assert!(Factorized::new(CMatrix::zeros(2, 2)).is_err());
    }

    #[test]
    fn spectra_of_triangular_matrix() {
        let a = CMatrix::from_row_slice(2, 2, &[c(1.0, 1.0), c(5.0, 0.0), c(0.0, 0.0), c(-2.0, 0.0)]);
        let mut ev = eigenvalues(&a);
        ev.sort_by(|x, y| x.re.partial_cmp(&y.re).unwrap());
        assert!((ev[0] - c(-2.0, 0.0)).norm() < 1e-12);
        assert!((ev[1] - c(1.0, 1.0)).norm() < 1e-12);
        let s = singular_values(&CMatrix::from_diagonal(&CVector::from_vec(vec![c(0.0, 3.0), c(-1.0, 0.0)])));
        assert!((s[0] - 3.0).abs() < 1e-14 && (s[1] - 1.0).abs() < 1e-14);
    }
}
