//! Thomas algorithm for constant tridiagonal systems, factored once and
//! reused every time step.

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct Tridiagonal {
    lower: Vec<f64>,
    // modified super-diagonal c'_i and inverse pivots 1/(b_i - a_i c'_{i-1})
    upper_mod: Vec<f64>,
    inv_pivot: Vec<f64>,
}

impl Tridiagonal {
    /// Factor the matrix with sub-diagonal `a` (`a[0]` unused), diagonal `b`
    /// and super-diagonal `c` (`c[n-1]` unused).
    pub fn factor(a: &[f64], b: &[f64], c: &[f64]) -> Result<Self> {
        let n = b.len();
        if n == 0 || a.len() != n || c.len() != n {
            return Err(Error::param(
                "tridiagonal",
                "diagonal lengths differ or are empty",
            ));
        }
        let mut upper_mod = vec![0.0; n];
        let mut inv_pivot = vec![0.0; n];
        let mut prev = 0.0;
        for i in 0..n {
            let pivot = b[i] - if i > 0 { a[i] * prev } else { 0.0 };
            if pivot.abs() < 1e-300 {
                return Err(Error::param(
                    "tridiagonal",
                    format!("zero pivot at row {i}"),
                ));
            }
            inv_pivot[i] = 1.0 / pivot;
            prev = if i + 1 < n { c[i] * inv_pivot[i] } else { 0.0 };
            upper_mod[i] = prev;
        }
        Ok(Tridiagonal {
            lower: a.to_vec(),
            upper_mod,
            inv_pivot,
        })
    }

    /// Constant-coefficient matrix with `diag` on the diagonal and `off` on both
    /// off-diagonals.
    pub fn symmetric_toeplitz(n: usize, diag: f64, off: f64) -> Result<Self> {
        Self::factor(&vec![off; n], &vec![diag; n], &vec![off; n])
    }

    pub fn len(&self) -> usize {
        self.inv_pivot.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inv_pivot.is_empty()
    }

    /// Overwrite `rhs` with the solution.
    pub fn solve_in_place(&self, rhs: &mut [f64]) {
        let n = self.len();
        assert_eq!(rhs.len(), n, "right-hand side length");
        rhs[0] *= self.inv_pivot[0];
        for i in 1..n {
            rhs[i] = (rhs[i] - self.lower[i] * rhs[i - 1]) * self.inv_pivot[i];
        }
        for i in (0..n - 1).rev() {
            rhs[i] -= self.upper_mod[i] * rhs[i + 1];
        }
    }
}
