//! Symmetric-matrix helpers shared by the distribution types and the encoders.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// Relative asymmetry tolerated before a matrix is rejected as non-symmetric.
pub const SYMMETRY_TOL: f64 = 1e-10;

/// Eigenvalues at or below `MIN_EIGEN_RATIO * ||A||_2` make a matrix "not SPD".
pub const MIN_EIGEN_RATIO: f64 = 1e-12;

/// Eigendecomposition of a symmetric positive definite matrix, with eigenvalues sorted
/// in ascending order and eigenvectors as the matching columns.
#[derive(Clone, Debug)]
pub struct SpdEigen {
    pub eigenvalues: DVector<f64>,
    pub eigenvectors: DMatrix<f64>,
}

impl SpdEigen {
    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    /// `V f(Λ) Vᵀ`.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
        let v = &self.eigenvectors;
        let scaled = DMatrix::from_fn(v.nrows(), v.ncols(), |i, j| v[(i, j)] * f(self.eigenvalues[j]));
        let mut out = &scaled * v.transpose();
        symmetrize_in_place(&mut out);
        out
    }

    pub fn log_det(&self) -> f64 {
        self.eigenvalues.iter().map(|l| l.ln()).sum()
    }
}

pub fn frobenius(a: &DMatrix<f64>) -> f64 {
    a.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn relative_asymmetry(a: &DMatrix<f64>) -> f64 {
    let norm = frobenius(a);
    if norm == 0.0 {
        return 0.0;
    }
    frobenius(&(a - a.transpose())) / norm
}

fn symmetrize_in_place(a: &mut DMatrix<f64>) {
    let n = a.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let m = 0.5 * (a[(i, j)] + a[(j, i)]);
            a[(i, j)] = m;
            a[(j, i)] = m;
        }
    }
}

/// Returns `(A + Aᵀ)/2`, rejecting matrices whose relative asymmetry exceeds [`SYMMETRY_TOL`].
pub fn symmetrize(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if a.nrows() != a.ncols() {
        return Err(Error::DimensionMismatch {
            expected: a.nrows(),
            got: a.ncols(),
        });
    }
    if a.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("matrix"));
    }
    let asymmetry = relative_asymmetry(a);
    if asymmetry > SYMMETRY_TOL {
        return Err(Error::NotSymmetric { asymmetry });
    }
    let mut s = a.clone();
    symmetrize_in_place(&mut s);
    Ok(s)
}

/// Symmetric eigendecomposition with the SPD check applied.
pub fn spd_eigen(a: &DMatrix<f64>) -> Result<SpdEigen> {
    let s = symmetrize(a)?;
    let eig = symmetric_eigen(&s);
    let max_abs = eig.eigenvalues.iter().fold(0.0_f64, |m, l| m.max(l.abs()));
    let min = eig.eigenvalues[0];
    if !(min > MIN_EIGEN_RATIO * max_abs) || max_abs == 0.0 {
        return Err(Error::NotPositiveDefinite { min_eigenvalue: min });
    }
    Ok(eig)
}

/// Eigendecomposition of an already symmetric matrix, sorted ascending. No SPD check.
pub fn symmetric_eigen(a: &DMatrix<f64>) -> SpdEigen {
    let n = a.nrows();
    if n == 0 {
        return SpdEigen {
            eigenvalues: DVector::zeros(0),
            eigenvectors: DMatrix::zeros(0, 0),
        };
    }
    let SymmetricEigen {
        eigenvalues,
        eigenvectors,
    } = SymmetricEigen::new(a.clone());
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eigenvalues[i].total_cmp(&eigenvalues[j]));
    SpdEigen {
        eigenvalues: DVector::from_iterator(n, order.iter().map(|&i| eigenvalues[i])),
        eigenvectors: DMatrix::from_fn(n, n, |r, c| eigenvectors[(r, order[c])]),
    }
}

/// The unique SPD square root of an SPD matrix.
pub fn sqrt_spd(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    Ok(spd_eigen(a)?.map(f64::sqrt))
}

/// Haar-distributed orthogonal matrix: orthogonal factor of a Gaussian matrix with the
/// signs fixed so that the triangular factor has a positive diagonal.
pub fn random_orthogonal<R: Rng + ?Sized>(d: usize, rng: &mut R) -> DMatrix<f64> {
    let g = DMatrix::from_fn(d, d, |_, _| rng.sample::<f64, _>(StandardNormal));
    let qr = g.qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..d {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

/// Random SPD matrix `Q diag(λ) Qᵀ` with Haar `Q` and eigenvalues log-uniform in
/// `[1, max_condition]`, so the condition number is at most `max_condition`.
pub fn random_spd<R: Rng + ?Sized>(d: usize, max_condition: f64, rng: &mut R) -> DMatrix<f64> {
    let q = random_orthogonal(d, rng);
    let log_max = max_condition.max(1.0).ln();
    let lambdas: Vec<f64> = (0..d).map(|_| (rng.random::<f64>() * log_max).exp()).collect();
    let scaled = DMatrix::from_fn(d, d, |i, j| q[(i, j)] * lambdas[j]);
    let mut a = &scaled * q.transpose();
    symmetrize_in_place(&mut a);
    a
}

/// Converts row-major nested vectors into a matrix.
pub fn matrix_from_rows(rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let n = rows.len();
    let m = rows.first().map_or(0, Vec::len);
    if let Some(bad) = rows.iter().find(|r| r.len() != m) {
        return Err(Error::DimensionMismatch {
            expected: m,
            got: bad.len(),
        });
    }
    Ok(DMatrix::from_fn(n, m, |i, j| rows[i][j]))
}

pub fn matrix_to_rows(a: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..a.nrows())
        .map(|i| (0..a.ncols()).map(|j| a[(i, j)]).collect())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;

    #[test]
    fn sqrt_of_identity_is_identity() {
        let i = DMatrix::<f64>::identity(4, 4);
        let b = sqrt_spd(&i).unwrap();
        assert!(frobenius(&(b - i)) < 1e-14);
    }

    #[test]
    fn sqrt_of_diagonal() {
        let a = DMatrix::from_diagonal(&DVector::from_vec(vec![4.0, 9.0]));
        let b = sqrt_spd(&a).unwrap();
        let expected = DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 3.0]));
        assert!(frobenius(&(b - expected)) < 1e-14);
    }

    #[test]
    fn sqrt_multiplies_back() {
        let mut rng = rng_from_seed(11);
        for d in 1..=6 {
            let a = random_spd(d, 1e4, &mut rng);
            let b = sqrt_spd(&a).unwrap();
            let err = frobenius(&(&b * &b - &a)) / frobenius(&a);
            assert!(err < 1e-8, "d={d} err={err}");
            // sqrt(B·B) = B
            let bb = &b * &b;
            let again = sqrt_spd(&bb).unwrap();
            assert!(frobenius(&(again - &b)) < 1e-7 * frobenius(&b).max(1.0));
        }
    }

    #[test]
    fn rejects_indefinite_with_diagnostic() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        match sqrt_spd(&a) {
            Err(Error::NotPositiveDefinite { min_eigenvalue }) => {
                assert!((min_eigenvalue + 1.0).abs() < 1e-12)
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn rejects_singular() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, -1.0, -1.0, 1.0]);
        assert!(matches!(sqrt_spd(&a), Err(Error::NotPositiveDefinite { .. })));
    }

    #[test]
    fn rejects_asymmetric() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.1, 0.0, 1.0]);
        assert!(matches!(sqrt_spd(&a), Err(Error::NotSymmetric { .. })));
    }

    #[test]
    fn orthogonal_is_orthogonal() {
        let mut rng = rng_from_seed(3);
        let q = random_orthogonal(7, &mut rng);
        let err = frobenius(&(q.transpose() * &q - DMatrix::identity(7, 7)));
        assert!(err < 1e-12);
    }

    #[test]
    fn random_spd_condition_bound() {
        let mut rng = rng_from_seed(5);
        for _ in 0..20 {
            let a = random_spd(4, 1e4, &mut rng);
            let e = spd_eigen(&a).unwrap();
            let cond = e.eigenvalues[3] / e.eigenvalues[0];
            assert!(cond <= 1e4 * (1.0 + 1e-9));
        }
    }
}
