//! The transform `X ↦ X(I − γX)⁻¹` on symmetric matrices and the block
//! matrix `J_{nd}` used by comparison arguments for nonlocal equations.

use nalgebra::{Cholesky, DMatrix, SymmetricEigen};

use crate::error::{Error, Result};

/// Largest accepted condition number of `I − γX`.
pub const MAX_CONDITION: f64 = 1e10;

#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix(DMatrix<f64>);

impl SymMatrix {
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::DimensionMismatch {
                what: "square matrix".into(),
                expected: m.nrows(),
                found: m.ncols(),
            });
        }
        let asym = if m.is_empty() {
            0.0
        } else {
            (&m - m.transpose()).amax()
        };
        if asym > 1e-12 * m.amax().max(1.0) {
            return Err(Error::NotSymmetric(asym));
        }
        Ok(SymMatrix(symmetrize(m)))
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if let Some(r) = rows.iter().find(|r| r.len() != n) {
            return Err(Error::DimensionMismatch {
                what: "matrix row".into(),
                expected: n,
                found: r.len(),
            });
        }
        Self::new(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
    }

    pub fn size(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.0
    }

    /// Eigenvalues in ascending order.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let mut ev: Vec<f64> = SymmetricEigen::new(self.0.clone())
            .eigenvalues
            .iter()
            .copied()
            .collect();
        ev.sort_by(f64::total_cmp);
        ev
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.size())
            .map(|i| (0..self.size()).map(|j| self.0[(i, j)]).collect())
            .collect()
    }
}

fn symmetrize(m: DMatrix<f64>) -> DMatrix<f64> {
    (&m + m.transpose()) * 0.5
}

/// `X^γ = X (I − γX)⁻¹`, defined for `X < (1/γ) I`.
///
/// `I − γX` is symmetric positive definite under that condition, so it is
/// inverted through a Cholesky factorisation. The result is symmetrised.
pub fn gamma_transform(x: &SymMatrix, gamma: f64) -> Result<SymMatrix> {
    if !(gamma.is_finite() && gamma > 0.0) {
        return Err(Error::InvalidScheme(format!(
            "gamma must be positive, got {gamma}"
        )));
    }
    let n = x.size();
    let limit = 1.0 / gamma;
    let ev = x.eigenvalues();
    if let Some(&max_eig) = ev.last() {
        if max_eig >= limit {
            return Err(Error::NotBelowThreshold { max_eig, limit });
        }
    }
    let shifted = DMatrix::<f64>::identity(n, n) - x.matrix() * gamma;
    // eigenvalues of I − γX are 1 − γλ, all positive here
    if let (Some(&lo), Some(&hi)) = (ev.first(), ev.last()) {
        let cond = (1.0 - gamma * lo) / (1.0 - gamma * hi);
        if !(cond.is_finite() && cond <= MAX_CONDITION) {
            return Err(Error::Singular(cond));
        }
    }
    let chol = Cholesky::new(shifted).ok_or(Error::Singular(f64::INFINITY))?;
    let inverse = chol.inverse();
    Ok(SymMatrix(symmetrize(x.matrix() * inverse)))
}

/// The `nd × nd` block matrix with `(n−1) I_d` on the diagonal blocks and
/// `−I_d` off the diagonal. It satisfies `J² = nJ`.
pub fn j_matrix(n: usize, d: usize) -> SymMatrix {
    let size = n * d;
    SymMatrix(DMatrix::from_fn(size, size, |r, c| {
        if r % d != c % d {
            0.0
        } else if r / d == c / d {
            n as f64 - 1.0
        } else {
            -1.0
        }
    }))
}
