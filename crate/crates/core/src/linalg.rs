//! Small dense linear-algebra helpers used across the toolkit.
//!
//! Everything here operates on `nalgebra::DMatrix<f64>` at desk scale
//! (state dimensions in the tens). The matrix exponential is nalgebra's
//! scaling-and-squaring implementation; tests check it against an
//! independent truncated-series oracle.

use nalgebra::linalg::{Cholesky, Schur, SymmetricEigen};
use nalgebra::{DMatrix, DVector};

use crate::{Error, Result};

/// `(A + Aᵀ)/2`.
pub fn symmetrize(a: &DMatrix<f64>) -> DMatrix<f64> {
    (a + a.transpose()) * 0.5
}

/// Eigenvalues of a symmetric matrix. The input is symmetrized first so
/// callers can pass matrices that are symmetric only up to roundoff.
pub fn sym_eigenvalues(a: &DMatrix<f64>) -> DVector<f64> {
    SymmetricEigen::new(symmetrize(a)).eigenvalues
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn min_sym_eig(a: &DMatrix<f64>) -> f64 {
    sym_eigenvalues(a).iter().copied().fold(f64::INFINITY, f64::min)
}

/// Largest eigenvalue of a symmetric matrix.
pub fn max_sym_eig(a: &DMatrix<f64>) -> f64 {
    sym_eigenvalues(a).iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

/// Largest eigenvalue together with a unit eigenvector attaining it.
pub fn max_sym_eig_pair(a: &DMatrix<f64>) -> (f64, DVector<f64>) {
    let eig = SymmetricEigen::new(symmetrize(a));
    let mut best = 0;
    for i in 1..eig.eigenvalues.len() {
        if eig.eigenvalues[i] > eig.eigenvalues[best] {
            best = i;
        }
    }
    (eig.eigenvalues[best], eig.eigenvectors.column(best).into_owned())
}

/// Condition number estimate `|λ|_max / |λ|_min` for a symmetric matrix.
pub fn sym_condition(a: &DMatrix<f64>) -> f64 {
    let eigs = sym_eigenvalues(a);
    let max = eigs.iter().map(|e| e.abs()).fold(0.0, f64::max);
    let min = eigs.iter().map(|e| e.abs()).fold(f64::INFINITY, f64::min);
    if min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Spectral abscissa: the maximum real part over all eigenvalues of a
/// (generally non-symmetric) square matrix.
pub fn spectral_abscissa(a: &DMatrix<f64>) -> Result<f64> {
    if !a.is_square() {
        return Err(Error::invalid("spectral_abscissa: matrix must be square"));
    }
    let schur = Schur::try_new(a.clone(), 1.0e-14, 100_000)
        .ok_or_else(|| Error::numerical("eigensolver did not converge"))?;
    Ok(schur
        .complex_eigenvalues()
        .iter()
        .map(|z| z.re)
        .fold(f64::NEG_INFINITY, f64::max))
}

/// All eigenvalues of a general square matrix, as complex numbers.
pub fn complex_eigenvalues(a: &DMatrix<f64>) -> Result<Vec<nalgebra::Complex<f64>>> {
    let schur = Schur::try_new(a.clone(), 1.0e-14, 100_000)
        .ok_or_else(|| Error::numerical("eigensolver did not converge"))?;
    Ok(schur.complex_eigenvalues().iter().copied().collect())
}

/// Matrix exponential `exp(A)` (scaling and squaring).
pub fn expm(a: &DMatrix<f64>) -> DMatrix<f64> {
    a.exp()
}

/// Cholesky factor of a symmetric positive definite matrix, or `None` if
/// the matrix is not (numerically) positive definite.
pub fn try_cholesky(a: &DMatrix<f64>) -> Option<Cholesky<f64, nalgebra::Dyn>> {
    Cholesky::new(symmetrize(a))
}

/// `log det A` for symmetric positive definite `A`, via Cholesky.
/// Returns `None` when `A` is not positive definite.
pub fn logdet_spd(a: &DMatrix<f64>) -> Option<f64> {
    let chol = try_cholesky(a)?;
    let l = chol.l();
    let mut acc = 0.0;
    for i in 0..l.nrows() {
        let d = l[(i, i)];
        if d <= 0.0 || !d.is_finite() {
            return None;
        }
        acc += d.ln();
    }
    Some(2.0 * acc)
}

/// True when every entry is finite.
pub fn all_finite(a: &DMatrix<f64>) -> bool {
    a.iter().all(|v| v.is_finite())
}

/// True when every entry is finite.
pub fn all_finite_vec(v: &DVector<f64>) -> bool {
    v.iter().all(|x| x.is_finite())
}

/// Frobenius inner product `⟨A, B⟩ = Σ_ij A_ij B_ij`.
pub fn frob_inner(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn expm_identity_for_zero() {
        let z = DMatrix::<f64>::zeros(3, 3);
        let e = expm(&z);
        assert_relative_eq!(e, DMatrix::identity(3, 3), epsilon = 1e-15);
    }

    #[test]
    fn spectral_abscissa_of_damped_oscillator() {
        // s² + s + 1: roots −0.5 ± 0.866i
        let a = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, -1.0]);
        assert_relative_eq!(spectral_abscissa(&a).unwrap(), -0.5, epsilon = 1e-12);
    }

    #[test]
    fn logdet_matches_product_of_eigenvalues() {
        let a = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let det: f64 = 2.0 * 1.0 - 0.25;
        assert_relative_eq!(logdet_spd(&a).unwrap(), det.ln(), epsilon = 1e-12);
        let indefinite = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(logdet_spd(&indefinite).is_none());
    }
}
