//! Small dense linear-algebra kernels shared by the synthesis code.

use nalgebra::{Complex, DMatrix};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum LinalgError {
    #[error("matrix must be Hurwitz to solve the Lyapunov equation (max Re eigenvalue = {0:.6e})")]
    NotHurwitz(f64),
    #[error("Lyapunov solve residual {residual:.3e} exceeds tolerance {tolerance:.3e}")]
    LyapunovResidual { residual: f64, tolerance: f64 },
}

/// Spectral norm (largest singular value).
pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.clone().svd(false, false).singular_values.max()
}

/// Largest real part over the eigenvalues.
pub fn spectral_abscissa(m: &DMatrix<f64>) -> f64 {
    m.clone()
        .complex_eigenvalues()
        .iter()
        .map(|e| e.re)
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Solve P M + M^T P = -I for symmetric positive definite P.
///
/// Bartels-Stewart on the complex Schur form M = Q U Q^H: with Y = Q^H P Q
/// the equation becomes U^H Y + Y U = -I, solved by forward substitution
/// since U^H is lower triangular. Requires M Hurwitz; the residual is checked
/// to 1e-8 before returning.
pub fn solve_lyapunov(m: &DMatrix<f64>) -> Result<DMatrix<f64>, LinalgError> {
    let n = m.nrows();
    assert_eq!(n, m.ncols(), "Lyapunov solve needs a square matrix");
    let abscissa = spectral_abscissa(m);
    if abscissa >= 0.0 {
        return Err(LinalgError::NotHurwitz(abscissa));
    }

    let mc: DMatrix<Complex<f64>> = m.map(|v| Complex::new(v, 0.0));
    let (q, u) = mc.schur().unpack();

    // forward substitution for U^H Y + Y U = -I
    let mut y = DMatrix::<Complex<f64>>::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            let mut rhs = if i == j { Complex::new(-1.0, 0.0) } else { Complex::new(0.0, 0.0) };
            for k in 0..i {
                rhs -= u[(k, i)].conj() * y[(k, j)];
            }
            for k in 0..j {
                rhs -= y[(i, k)] * u[(k, j)];
            }
            y[(i, j)] = rhs / (u[(i, i)].conj() + u[(j, j)]);
        }
    }

    let p_complex = &q * y * q.adjoint();
    let mut p = p_complex.map(|v| v.re);
    p = (&p + p.transpose()) * 0.5;

    let tolerance = 1e-8;
    let residual = lyapunov_residual(m, &p);
    if residual > tolerance {
        // fall back to the dense Kronecker system; Schur accuracy can degrade
        // for strongly non-normal inputs
        let p2 = solve_lyapunov_kronecker(m);
        let r2 = lyapunov_residual(m, &p2);
        if r2 > tolerance {
            return Err(LinalgError::LyapunovResidual { residual: r2, tolerance });
        }
        return Ok(p2);
    }
    Ok(p)
}

/// ||P M + M^T P + I||.
pub fn lyapunov_residual(m: &DMatrix<f64>, p: &DMatrix<f64>) -> f64 {
    let n = m.nrows();
    (p * m + m.transpose() * p + DMatrix::<f64>::identity(n, n)).norm()
}

/// Dense Kronecker-system solve of P M + M^T P = -I (test oracle and
/// fallback). vec(M^T P + P M) = (I (x) M^T + M^T (x) I) vec(P).
pub fn solve_lyapunov_kronecker(m: &DMatrix<f64>) -> DMatrix<f64> {
    let n = m.nrows();
    let mt = m.transpose();
    let eye = DMatrix::<f64>::identity(n, n);
    let k = eye.kronecker(&mt) + mt.kronecker(&eye);
    let rhs = DMatrix::<f64>::identity(n, n) * -1.0;
    let rhs_vec = nalgebra::DVector::from_column_slice(rhs.as_slice());
    let sol = k.lu().solve(&rhs_vec).expect("Hurwitz Lyapunov system is nonsingular");
    let mut p = DMatrix::from_column_slice(n, n, sol.as_slice());
    p = (&p + p.transpose()) * 0.5;
    p
}
