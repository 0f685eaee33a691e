//! Spectral decomposition of the Laplacian with the consensus mode isolated.
//!
//! A similarity transformation S_L takes L to a block-triangular form with
//! the zero eigenvalue in position (1,1) and the stabilized modes
//! λ₂, …, λ_N in the trailing block. Instead of the (numerically fragile)
//! Jordan form, we use a unitary ordered Schur decomposition: the trailing
//! block is upper triangular, the first column of S_L is the right
//! eigenvector for eigenvalue 0, and every quantity consumed downstream
//! (‖Θ‖, ‖Δ‖, ‖x̂‖, the closed-loop spectrum) is invariant under this
//! substitution.

use crate::error::{Error, Result};
use crate::linalg::schur::{complex_schur_real, reorder_selected_first};
use crate::linalg::{C64, CMatrix, RMatrix, spectral_norm_real};

/// Relative tolerance for declaring a Laplacian eigenvalue zero.
pub const ZERO_EIG_REL_TOL: f64 = 1e-9;

#[derive(Debug, Clone)]
pub struct SpectralDecomposition {
    /// Unitary transformation S_L; first column is the right eigenvector of
    /// L for eigenvalue 0.
    pub s_left: CMatrix,
    /// Upper-triangular form S_Lᴴ L S_L with the zero eigenvalue at (1,1).
    pub l_reduced: CMatrix,
    /// min Re(λ) over the nonzero eigenvalues.
    pub lambda2_real: f64,
    /// All N eigenvalues, zero first, the rest in diagonal order.
    pub eigenvalues: Vec<C64>,
}

impl SpectralDecomposition {
    pub fn n_agents(&self) -> usize {
        self.s_left.nrows()
    }

    /// The trailing (N−1)×(N−1) triangular block J_{2:N}.
    pub fn j_block(&self) -> CMatrix {
        let n = self.n_agents();
        self.l_reduced.view((1, 1), (n - 1, n - 1)).into_owned()
    }

    /// Θ = S_L · [0ᵀ_{N−1}; J_{2:N}]  (N × (N−1)).
    pub fn theta(&self) -> CMatrix {
        let n = self.n_agents();
        let mut stacked = CMatrix::zeros(n, n - 1);
        stacked
            .view_mut((1, 0), (n - 1, n - 1))
            .copy_from(&self.j_block());
        &self.s_left * stacked
    }

    /// Δ = [0_{N−1} J_{2:N}] · S_L⁻¹  ((N−1) × N); S_L⁻¹ = S_Lᴴ here.
    pub fn delta(&self) -> CMatrix {
        let n = self.n_agents();
        let mut padded = CMatrix::zeros(n - 1, n);
        padded
            .view_mut((0, 1), (n - 1, n - 1))
            .copy_from(&self.j_block());
        padded * self.s_left.adjoint()
    }

    /// Lower (N−1)·n block of S⁻¹x for S = S_L ⊗ I_n: the coordinates the
    /// consensus guarantees bound.
    pub fn transform_tail(&self, x: &crate::linalg::RVector, n_state: usize) -> Vec<C64> {
        let n = self.n_agents();
        assert_eq!(x.len(), n * n_state, "stacked state has wrong length");
        let mut out = Vec::with_capacity((n - 1) * n_state);
        for row in 1..n {
            for k in 0..n_state {
                let mut acc = C64::new(0.0, 0.0);
                for col in 0..n {
                    // (S_Lᴴ)[row, col] = conj(S_L[col, row])
                    acc += self.s_left[(col, row)].conj() * C64::new(x[col * n_state + k], 0.0);
                }
                out.push(acc);
            }
        }
        out
    }

    /// Euclidean norm of [`Self::transform_tail`].
    pub fn tail_norm(&self, x: &crate::linalg::RVector, n_state: usize) -> f64 {
        self.transform_tail(x, n_state)
            .iter()
            .map(|z| z.norm_sqr())
            .sum::<f64>()
            .sqrt()
    }
}

/// Decompose a Laplacian, isolating the zero eigenvalue first.
///
/// Fails with [`Error::MultipleZeroEigenvalues`] when the zero eigenvalue is
/// not simple, i.e. when the graph has no directed spanning tree.
pub fn spectral_transform(l: &RMatrix) -> Result<SpectralDecomposition> {
    let n = l.nrows();
    if n == 0 || n != l.ncols() {
        return Err(Error::DimensionMismatch {
            what: "spectral_transform",
            expected: "square, nonempty".into(),
            got: format!("{}x{}", l.nrows(), l.ncols()),
        });
    }
    let norm = spectral_norm_real(l);
    let zero_tol = ZERO_EIG_REL_TOL * norm.max(f64::MIN_POSITIVE);

    let mut schur = complex_schur_real(l)?;
    let zero_count = reorder_selected_first(&mut schur, |lam| lam.norm() <= zero_tol);
    if zero_count != 1 {
        return Err(Error::MultipleZeroEigenvalues { count: zero_count });
    }

    let eigenvalues = schur.eigenvalues();
    let lambda2_real = eigenvalues[1..]
        .iter()
        .map(|lam| lam.re)
        .fold(f64::INFINITY, f64::min);

    let recon = schur.reconstruction_error(&crate::linalg::complexify(l));
    if recon > 1e-10 {
        return Err(Error::EigenFailure { n });
    }

    Ok(SpectralDecomposition {
        s_left: schur.q,
        l_reduced: schur.t,
        lambda2_real,
        eigenvalues,
    })
}
