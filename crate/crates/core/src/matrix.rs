//! Small symmetric matrices for the Gaussian (diffusion) part.
//!
//! Dimensions are at most three, so determinants and inverses are written
//! out directly instead of pulling in a linear-algebra stack.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Symmetric d x d matrix, row-major storage, d <= 3.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SymMatrix {
    dim: usize,
    a: Vec<f64>,
}

impl SymMatrix {
    pub fn new(dim: usize, entries: Vec<f64>) -> Result<Self> {
        if dim == 0 || dim > 3 {
            return Err(Error::Unsupported(format!(
                "matrix dimension {dim} (supported: 1..=3)"
            )));
        }
        if entries.len() != dim * dim {
            return Err(Error::InvalidModel(format!(
                "matrix needs {} entries, got {}",
                dim * dim,
                entries.len()
            )));
        }
        for i in 0..dim {
            for j in (i + 1)..dim {
                if (entries[i * dim + j] - entries[j * dim + i]).abs()
                    > 1e-12 * entries[i * dim + j].abs().max(1.0)
                {
                    return Err(Error::InvalidModel("matrix is not symmetric".into()));
                }
            }
        }
        Ok(Self { dim, a: entries })
    }

    pub fn scaled_identity(dim: usize, c: f64) -> Self {
        let mut a = vec![0.0; dim * dim];
        for i in 0..dim {
            a[i * dim + i] = c;
        }
        Self { dim, a }
    }

    pub fn diagonal(diag: &[f64]) -> Self {
        let dim = diag.len();
        let mut a = vec![0.0; dim * dim];
        for (i, &v) in diag.iter().enumerate() {
            a[i * dim + i] = v;
        }
        Self { dim, a }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn entry(&self, i: usize, j: usize) -> f64 {
        self.a[i * self.dim + j]
    }

    /// Quadratic form x^T A x.
    pub fn quadratic_form(&self, x: &[f64]) -> f64 {
        let d = self.dim;
        let mut acc = 0.0;
        for i in 0..d {
            for j in 0..d {
                acc += x[i] * self.a[i * d + j] * x[j];
            }
        }
        acc
    }

    pub fn det(&self) -> f64 {
        let a = &self.a;
        match self.dim {
            1 => a[0],
            2 => a[0] * a[3] - a[1] * a[2],
            3 => {
                a[0] * (a[4] * a[8] - a[5] * a[7]) - a[1] * (a[3] * a[8] - a[5] * a[6])
                    + a[2] * (a[3] * a[7] - a[4] * a[6])
            }
            _ => unreachable!(),
        }
    }

    /// Positive definiteness via leading principal minors.
    pub fn is_elliptic(&self) -> bool {
        let a = &self.a;
        match self.dim {
            1 => a[0] > 0.0,
            2 => a[0] > 0.0 && self.det() > 0.0,
            3 => {
                a[0] > 0.0
                    && (a[0] * a[4] - a[1] * a[3]) > 0.0
                    && self.det() > 0.0
            }
            _ => unreachable!(),
        }
    }

    pub fn inverse(&self) -> Result<SymMatrix> {
        let det = self.det();
        if det.abs() < 1e-300 {
            return Err(Error::InvalidModel("matrix is singular".into()));
        }
        let a = &self.a;
        let inv = match self.dim {
            1 => vec![1.0 / a[0]],
            2 => {
                let s = 1.0 / det;
                vec![a[3] * s, -a[1] * s, -a[2] * s, a[0] * s]
            }
            3 => {
                let s = 1.0 / det;
                let cof = |r1: usize, c1: usize, r2: usize, c2: usize| {
                    a[r1 * 3 + c1] * a[r2 * 3 + c2] - a[r1 * 3 + c2] * a[r2 * 3 + c1]
                };
                // Adjugate of a symmetric matrix is symmetric.
                vec![
                    cof(1, 1, 2, 2) * s,
                    -cof(0, 1, 2, 2) * s,
                    cof(0, 1, 1, 2) * s,
                    -cof(1, 0, 2, 2) * s,
                    cof(0, 0, 2, 2) * s,
                    -cof(0, 0, 1, 2) * s,
                    cof(1, 0, 2, 1) * s,
                    -cof(0, 0, 2, 1) * s,
                    cof(0, 0, 1, 1) * s,
                ]
            }
            _ => unreachable!(),
        };
        SymMatrix::new(self.dim, inv)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn inverse_untangles_quadratic_form() {
        let m = SymMatrix::new(2, vec![2.0, 0.5, 0.5, 1.0]).unwrap();
        assert!(m.is_elliptic());
        let inv = m.inverse().unwrap();
        // A * A^(-1) = I, checked entrywise.
        for i in 0..2 {
            for j in 0..2 {
                let mut acc = 0.0;
                for k in 0..2 {
                    acc += m.entry(i, k) * inv.entry(k, j);
                }
                let expect = if i == j { 1.0 } else { 0.0 };
                assert_relative_eq!(acc, expect, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn three_by_three_det_and_inverse() {
        let m = SymMatrix::new(3, vec![4.0, 1.0, 0.0, 1.0, 3.0, 1.0, 0.0, 1.0, 2.0]).unwrap();
        assert!(m.is_elliptic());
        assert_relative_eq!(m.det(), 18.0, epsilon = 1e-12);
        let inv = m.inverse().unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let mut acc = 0.0;
                for k in 0..3 {
                    acc += m.entry(i, k) * inv.entry(k, j);
                }
                let expect = if i == j { 1.0 } else { 0.0 };
                assert_relative_eq!(acc, expect, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn indefinite_matrix_is_not_elliptic() {
        let m = SymMatrix::new(2, vec![1.0, 2.0, 2.0, 1.0]).unwrap();
        assert!(!m.is_elliptic());
    }
}
