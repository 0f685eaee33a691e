//! Complex Schur decomposition with eigenvalue reordering.
//!
//! `complex_schur` wraps nalgebra's QR iteration (which is genuinely
//! upper-triangular over ℂ). `reorder_selected_first` moves a selected set of
//! eigenvalues to the leading diagonal positions by adjacent swaps with
//! complex Givens rotations, the piece needed to isolate the consensus mode
//! of a Laplacian and to extract stable invariant subspaces of Hamiltonians.

use nalgebra::DMatrix;

use super::{C64, CMatrix};
use crate::error::{Error, Result};

/// M = Q T Qᴴ with Q unitary and T upper triangular.
#[derive(Debug, Clone)]
pub struct SchurDecomposition {
    pub q: CMatrix,
    pub t: CMatrix,
}

impl SchurDecomposition {
    pub fn eigenvalues(&self) -> Vec<C64> {
        (0..self.t.nrows()).map(|i| self.t[(i, i)]).collect()
    }

    /// Relative reconstruction error ‖Q T Qᴴ − M‖_F / ‖M‖_F.
    pub fn reconstruction_error(&self, m: &CMatrix) -> f64 {
        let recon = &self.q * &self.t * self.q.adjoint();
        let denom = m.norm();
        if denom == 0.0 {
            (recon - m).norm()
        } else {
            (recon - m).norm() / denom
        }
    }
}

pub fn complex_schur(m: &CMatrix) -> Result<SchurDecomposition> {
    let n = m.nrows();
    if n != m.ncols() {
        return Err(Error::DimensionMismatch {
            what: "complex_schur",
            expected: format!("{n}x{n}"),
            got: format!("{}x{}", m.nrows(), m.ncols()),
        });
    }
    if n == 0 {
        return Ok(SchurDecomposition {
            q: CMatrix::zeros(0, 0),
            t: CMatrix::zeros(0, 0),
        });
    }
    let schur = nalgebra::linalg::Schur::try_new(m.clone(), f64::EPSILON, 100_000)
        .ok_or(Error::EigenFailure { n })?;
    let (q, mut t) = schur.unpack();
    // QR iteration over ℂ leaves only rounding noise below the diagonal.
    for i in 0..n {
        for j in 0..i {
            t[(i, j)] = C64::new(0.0, 0.0);
        }
    }
    Ok(SchurDecomposition { q, t })
}

/// Reorder so that every eigenvalue satisfying `select` comes first along the
/// diagonal (stable: relative order within each class is preserved). Returns
/// the number of selected eigenvalues.
pub fn reorder_selected_first<F>(s: &mut SchurDecomposition, select: F) -> usize
where
    F: Fn(C64) -> bool,
{
    let n = s.t.nrows();
    let mut front = 0; // next position to fill with a selected eigenvalue
    for k in 0..n {
        if select(s.t[(k, k)]) {
            for j in (front..k).rev() {
                swap_adjacent(s, j);
            }
            front += 1;
        }
    }
    front
}

/// Swap the eigenvalues at diagonal positions (k, k+1) by a unitary
/// similarity (the complex analogue of LAPACK's trexc step).
///
/// For the 2×2 block [[t11, t12], [0, t22]] the vector (t12, t22 − t11) is an
/// eigenvector for t22; the Givens rotation with that first column moves t22
/// into the leading position.
fn swap_adjacent(s: &mut SchurDecomposition, k: usize) {
    let t11 = s.t[(k, k)];
    let t12 = s.t[(k, k + 1)];
    let t22 = s.t[(k + 1, k + 1)];

    let d = t22 - t11;
    let r = (t12.norm_sqr() + d.norm_sqr()).sqrt();
    let scale = t11.norm().max(t22.norm()).max(t12.norm());
    if d.norm() <= f64::EPSILON * scale.max(1.0) {
        // Equal eigenvalues: any ordering is valid, nothing to rotate.
        return;
    }
    let g11 = t12 / C64::new(r, 0.0);
    let g21 = d / C64::new(r, 0.0);
    // G = [[g11, -conj(g21)], [g21, conj(g11)]] is unitary with first column
    // the normalized eigenvector.
    let g12 = -g21.conj();
    let g22 = g11.conj();

    let n = s.t.nrows();
    // T ← Gᴴ T (rows k, k+1), then T ← T G (columns k, k+1); Q ← Q G.
    for j in 0..n {
        let a = s.t[(k, j)];
        let b = s.t[(k + 1, j)];
        s.t[(k, j)] = g11.conj() * a + g21.conj() * b;
        s.t[(k + 1, j)] = g12.conj() * a + g22.conj() * b;
    }
    for i in 0..n {
        let a = s.t[(i, k)];
        let b = s.t[(i, k + 1)];
        s.t[(i, k)] = a * g11 + b * g21;
        s.t[(i, k + 1)] = a * g12 + b * g22;
    }
    for i in 0..n {
        let a = s.q[(i, k)];
        let b = s.q[(i, k + 1)];
        s.q[(i, k)] = a * g11 + b * g21;
        s.q[(i, k + 1)] = a * g12 + b * g22;
    }
    // The similarity is exact up to rounding; pin the structural zeros.
    s.t[(k + 1, k)] = C64::new(0.0, 0.0);
    for i in (k + 2)..n {
        s.t[(i, k)] = C64::new(0.0, 0.0);
        s.t[(i, k + 1)] = C64::new(0.0, 0.0);
    }
}

/// Convenience: Schur decomposition of a real matrix lifted to ℂ.
pub fn complex_schur_real(m: &DMatrix<f64>) -> Result<SchurDecomposition> {
    complex_schur(&super::complexify(m))
}
