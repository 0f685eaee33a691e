//! Small dense linear-algebra toolkit on top of nalgebra.
//!
//! Everything here works on dynamically sized matrices at the problem sizes
//! of this crate (a handful of agents, low-order dynamics). The norm
//! convention is fixed crate-wide: spectral (induced 2-) norm for matrices,
//! Euclidean for vectors.

pub mod schur;

use nalgebra::{Complex, DMatrix, DVector};

use crate::error::{Error, Result};

pub type C64 = Complex<f64>;
pub type CMatrix = DMatrix<C64>;
pub type CVector = DVector<C64>;
pub type RMatrix = DMatrix<f64>;
pub type RVector = DVector<f64>;

/// Lift a real matrix into the complex field.
pub fn complexify(m: &RMatrix) -> CMatrix {
    m.map(|x| C64::new(x, 0.0))
}

pub fn complexify_vec(v: &RVector) -> CVector {
    v.map(|x| C64::new(x, 0.0))
}

/// Eigenvalues of a Hermitian matrix, ascending.
///
/// The input is symmetrized as (M + Mᴴ)/2 first so callers may pass matrices
/// that are Hermitian only up to rounding.
pub fn hermitian_eigenvalues(m: &CMatrix) -> Result<Vec<f64>> {
    let n = m.nrows();
    if n == 0 {
        return Ok(Vec::new());
    }
    let h = (m + m.adjoint()) * C64::new(0.5, 0.0);
    let eig = nalgebra::linalg::SymmetricEigen::try_new(h, f64::EPSILON, 0)
        .ok_or(Error::EigenFailure { n })?;
    let mut vals: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    vals.sort_by(|a, b| a.total_cmp(b));
    Ok(vals)
}

/// Eigenvalues of a real symmetric matrix, ascending.
pub fn symmetric_eigenvalues(m: &RMatrix) -> Result<Vec<f64>> {
    let n = m.nrows();
    if n == 0 {
        return Ok(Vec::new());
    }
    let h = (m + m.transpose()) * 0.5;
    let eig = nalgebra::linalg::SymmetricEigen::try_new(h, f64::EPSILON, 0)
        .ok_or(Error::EigenFailure { n })?;
    let mut vals: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    vals.sort_by(|a, b| a.total_cmp(b));
    Ok(vals)
}

/// Spectral norm ‖M‖₂ = σ_max(M), computed as √λ_max(MᴴM).
///
/// The Hermitian route is deterministic and converges unconditionally; the
/// squaring costs at most half the significant digits, which is far below
/// the tolerances used anywhere in this crate.
pub fn spectral_norm(m: &CMatrix) -> f64 {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0.0;
    }
    let gram = m.adjoint() * m;
    match hermitian_eigenvalues(&gram) {
        Ok(vals) => vals.last().copied().unwrap_or(0.0).max(0.0).sqrt(),
        Err(_) => m.norm(), // Frobenius upper bound as a last resort
    }
}

pub fn spectral_norm_real(m: &RMatrix) -> f64 {
    spectral_norm(&complexify(m))
}

/// Singular values, descending (via the Gram matrix).
pub fn singular_values(m: &RMatrix) -> Result<Vec<f64>> {
    let gram = if m.nrows() <= m.ncols() {
        m * m.transpose()
    } else {
        m.transpose() * m
    };
    let mut vals: Vec<f64> = symmetric_eigenvalues(&gram)?
        .into_iter()
        .map(|l| l.max(0.0).sqrt())
        .collect();
    vals.reverse();
    Ok(vals)
}

/// Eigenvalues of a general complex matrix (diagonal of its Schur form).
pub fn eigenvalues(m: &CMatrix) -> Result<Vec<C64>> {
    if m.nrows() == 0 {
        return Ok(Vec::new());
    }
    let s = schur::complex_schur(m)?;
    Ok((0..m.nrows()).map(|i| s.t[(i, i)]).collect())
}

/// Spectral abscissa max Re(eig(M)); −∞ for the empty matrix.
pub fn spectral_abscissa(m: &CMatrix) -> Result<f64> {
    Ok(eigenvalues(m)?
        .into_iter()
        .map(|l| l.re)
        .fold(f64::NEG_INFINITY, f64::max))
}

/// Matrix exponential e^M (scaling-and-squaring with Padé approximation,
/// as provided by nalgebra).
pub fn expm(m: &RMatrix) -> RMatrix {
    m.exp()
}

pub fn expm_complex(m: &CMatrix) -> CMatrix {
    m.exp()
}

/// Solve M X = B for complex M via LU with partial pivoting.
pub fn solve(m: &CMatrix, b: &CMatrix) -> Result<CMatrix> {
    let lu = m.clone().lu();
    lu.solve(b)
        .ok_or_else(|| Error::NoStabilizingSolution("singular linear system".into()))
}

pub fn inverse(m: &CMatrix) -> Result<CMatrix> {
    let n = m.nrows();
    solve(m, &CMatrix::identity(n, n))
}

/// Kronecker product (thin wrapper; nalgebra provides it).
pub fn kron(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a.kronecker(b)
}

/// Matrix exponential through an eigendecomposition: V e^{Λt} V⁻¹.
///
/// Valid only for (numerically) diagonalizable inputs; used as an
/// independent cross-check of the Padé route in tests, per the dual-route
/// requirement on the decay certificate.
pub fn expm_eig_oracle(m: &CMatrix, t: f64) -> Result<CMatrix> {
    let n = m.nrows();
    if n == 0 {
        return Ok(CMatrix::zeros(0, 0));
    }
    let s = schur::complex_schur(m)?;
    let v = eigenvectors_from_schur(&s)?;
    let lam = CVector::from_iterator(n, (0..n).map(|i| s.t[(i, i)]));
    let d = CMatrix::from_diagonal(&lam.map(|l| (l * C64::new(t, 0.0)).exp()));
    let vi = inverse(&v)?;
    Ok(&v * d * vi)
}

/// Eigenvector matrix from a Schur decomposition by triangular
/// back-substitution: columns of Q·W where T w_k = λ_k w_k.
fn eigenvectors_from_schur(s: &schur::SchurDecomposition) -> Result<CMatrix> {
    let n = s.t.nrows();
    let mut w = CMatrix::zeros(n, n);
    for k in 0..n {
        let lk = s.t[(k, k)];
        let mut col = CVector::zeros(n);
        col[k] = C64::new(1.0, 0.0);
        // Solve (T − λ_k I) w = 0 upward from row k−1.
        for i in (0..k).rev() {
            let mut acc = C64::new(0.0, 0.0);
            for j in (i + 1)..=k {
                acc += s.t[(i, j)] * col[j];
            }
            let denom = s.t[(i, i)] - lk;
            if denom.norm() < 1e-12 * (1.0 + lk.norm()) {
                return Err(Error::NoStabilizingSolution(
                    "defective matrix: eigendecomposition oracle unavailable".into(),
                ));
            }
            col[i] = -acc / denom;
        }
        let norm = col.norm();
        w.set_column(k, &(col / C64::new(norm, 0.0)));
    }
    Ok(&s.q * w)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn spectral_norm_matches_known_values() {
        // diag(3, -5): spectral norm 5
        let m = RMatrix::from_diagonal(&RVector::from_vec(vec![3.0, -5.0]));
        assert_relative_eq!(spectral_norm_real(&m), 5.0, max_relative = 1e-12);

        // rank-one uvᵀ: norm = ‖u‖‖v‖
        let u = RVector::from_vec(vec![1.0, 2.0]);
        let v = RVector::from_vec(vec![3.0, -4.0, 12.0]);
        let m = &u * v.transpose();
        assert_relative_eq!(
            spectral_norm_real(&m),
            u.norm() * v.norm(),
            max_relative = 1e-12
        );
    }

    #[test]
    fn hermitian_eigenvalues_of_pauli_like_matrix() {
        let m = CMatrix::from_row_slice(2, 2, &[c(2.0, 0.0), c(0.0, 1.0), c(0.0, -1.0), c(2.0, 0.0)]);
        let vals = hermitian_eigenvalues(&m).unwrap();
        assert_relative_eq!(vals[0], 1.0, max_relative = 1e-12);
        assert_relative_eq!(vals[1], 3.0, max_relative = 1e-12);
    }

    #[test]
    fn expm_scalar_and_nilpotent() {
        let m = RMatrix::from_element(1, 1, -0.7);
        assert_relative_eq!(expm(&m)[(0, 0)], (-0.7f64).exp(), max_relative = 1e-14);

        let m = RMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        let e = expm(&m);
        assert_relative_eq!(e[(0, 1)], 1.0, max_relative = 1e-14);
        assert_relative_eq!(e[(0, 0)], 1.0, max_relative = 1e-14);
    }

    #[test]
    fn pade_exponential_agrees_with_eigendecomposition_oracle() {
        // Diagonalizable rotation+decay matrix; the two routes must agree to 1e-8.
        let m = RMatrix::from_row_slice(2, 2, &[-0.3, -2.0, 2.0, -0.3]);
        let mc = complexify(&m);
        for &t in &[0.1, 1.0, 5.0, 20.0] {
            let pade = expm(&(m.clone() * t));
            let oracle = expm_eig_oracle(&mc, t).unwrap();
            let diff = (&complexify(&pade) - &oracle).norm() / oracle.norm().max(1e-300);
            assert!(diff < 1e-8, "t={t}: relative gap {diff:e}");
        }
    }

    #[test]
    fn singular_values_of_wide_matrix() {
        let m = RMatrix::from_row_slice(2, 3, &[1.0, 0.0, 0.0, 0.0, 2.0, 0.0]);
        let sv = singular_values(&m).unwrap();
        assert_relative_eq!(sv[0], 2.0, max_relative = 1e-12);
        assert_relative_eq!(sv[1], 1.0, max_relative = 1e-12);
    }

    #[test]
    fn eigenvalues_of_companion_matrix() {
        // x² − x − 2 = (x−2)(x+1)
        let m = complexify(&RMatrix::from_row_slice(2, 2, &[0.0, 2.0, 1.0, 1.0]));
        let mut eigs = eigenvalues(&m).unwrap();
        eigs.sort_by(|a, b| a.re.total_cmp(&b.re));
        assert_relative_eq!(eigs[0].re, -1.0, max_relative = 1e-10);
        assert_relative_eq!(eigs[1].re, 2.0, max_relative = 1e-10);
    }
}
