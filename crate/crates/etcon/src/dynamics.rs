//! Shared agent dynamics (A, B) and the controllability test.

use crate::error::{Error, Result};
use crate::linalg::{RMatrix, singular_values};

/// Relative rank tolerance for the controllability matrix.
pub const CTRB_RANK_REL_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct LtiDynamics {
    a: RMatrix,
    b: RMatrix,
}

impl LtiDynamics {
    pub fn new(a: RMatrix, b: RMatrix) -> Result<Self> {
        if a.nrows() != a.ncols() || a.nrows() == 0 {
            return Err(Error::DimensionMismatch {
                what: "LtiDynamics A",
                expected: "square, nonempty".into(),
                got: format!("{}x{}", a.nrows(), a.ncols()),
            });
        }
        if b.nrows() != a.nrows() || b.ncols() == 0 {
            return Err(Error::DimensionMismatch {
                what: "LtiDynamics B",
                expected: format!("{}xm", a.nrows()),
                got: format!("{}x{}", b.nrows(), b.ncols()),
            });
        }
        Ok(Self { a, b })
    }

    pub fn a(&self) -> &RMatrix {
        &self.a
    }

    pub fn b(&self) -> &RMatrix {
        &self.b
    }

    /// State dimension n.
    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    /// Input dimension m.
    pub fn m(&self) -> usize {
        self.b.ncols()
    }

    /// Controllability matrix [B, AB, …, A^{n−1}B]  (n × n·m).
    pub fn controllability_matrix(&self) -> RMatrix {
        let n = self.n();
        let m = self.m();
        let mut ctrb = RMatrix::zeros(n, n * m);
        let mut block = self.b.clone();
        for k in 0..n {
            ctrb.view_mut((0, k * m), (n, m)).copy_from(&block);
            if k + 1 < n {
                block = &self.a * block;
            }
        }
        ctrb
    }

    /// Numerical rank of the controllability matrix at tolerance
    /// `CTRB_RANK_REL_TOL` relative to the largest singular value.
    pub fn controllability_rank(&self) -> Result<usize> {
        let sv = singular_values(&self.controllability_matrix())?;
        let Some(&smax) = sv.first() else {
            return Ok(0);
        };
        if smax <= 0.0 {
            return Ok(0);
        }
        Ok(sv.iter().filter(|&&s| s > CTRB_RANK_REL_TOL * smax).count())
    }

    pub fn is_controllable(&self) -> Result<bool> {
        Ok(self.controllability_rank()? == self.n())
    }

    pub fn require_controllable(&self) -> Result<()> {
        let rank = self.controllability_rank()?;
        if rank == self.n() {
            Ok(())
        } else {
            Err(Error::Uncontrollable { rank, n: self.n() })
        }
    }
}
