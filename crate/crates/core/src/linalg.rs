//! Dense linear-algebra vocabulary shared by every module.
//!
//! Everything here is small and dense: matrices are a few dozen rows at most,
//! so `nalgebra`'s dynamic types are used directly.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type RealVector = DVector<f64>;

/// Default tolerance for all `⪯ 0` / `⪰ 0` tests, applied to the extreme eigenvalue.
pub const DEFAULT_PSD_TOL: f64 = 1e-9;

/// Real symmetric matrix. Construction symmetrizes as `(A + Aᵀ)/2`, so the
/// stored entries are exactly symmetric.
#[derive(Debug, Clone, PartialEq)]
pub struct SymmetricMatrix(DMatrix<f64>);

impl SymmetricMatrix {
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::DimensionMismatch(format!(
                "symmetric matrix must be square, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        if m.nrows() == 0 {
            return Err(Error::InvalidInput("symmetric matrix must be non-empty".into()));
        }
        if m.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("matrix has non-finite entries".into()));
        }
        let n = m.nrows();
        let mut s = m;
        for i in 0..n {
            for j in (i + 1)..n {
                let avg = 0.5 * (s[(i, j)] + s[(j, i)]);
                s[(i, j)] = avg;
                s[(j, i)] = avg;
            }
        }
        Ok(Self(s))
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        Self::new(matrix_from_rows(rows)?)
    }

    pub fn identity(n: usize) -> Self {
        Self(DMatrix::identity(n, n))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.0
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self(&self.0 * c)
    }

    pub fn shifted(&self, c: f64) -> Self {
        let n = self.dim();
        Self(&self.0 + DMatrix::identity(n, n) * c)
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        matrix_to_rows(&self.0)
    }

    pub fn quad_form(&self, v: &DVector<f64>) -> f64 {
        v.dot(&(&self.0 * v))
    }

    pub fn lambda_extremes(&self) -> (f64, f64) {
        let eig = SymmetricEigen::new(self.0.clone());
        eig.eigenvalues.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
    }

    /// Eigenvector of the largest eigenvalue, together with that eigenvalue.
    pub fn top_eigenpair(&self) -> (f64, DVector<f64>) {
        let eig = SymmetricEigen::new(self.0.clone());
        let (k, &lam) = eig.eigenvalues.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).expect("non-empty matrix");
        (lam, eig.eigenvectors.column(k).into_owned())
    }
}

/// Smallest and largest eigenvalue of a symmetric matrix.
pub fn lambda_extremes(m: &SymmetricMatrix) -> (f64, f64) {
    m.lambda_extremes()
}

/// Central-difference Jacobian of `map` at `point`; column `k` perturbs coordinate `k` by `±step`.
pub fn finite_diff_jacobian<F>(map: F, point: &DVector<f64>, step: f64) -> Result<DMatrix<f64>>
where
    F: Fn(&DVector<f64>) -> Result<DVector<f64>>,
{
    if !(step > 0.0) {
        return Err(Error::InvalidInput(format!("finite-difference step must be > 0, got {step}")));
    }
    let n = point.len();
    let mut cols = Vec::with_capacity(n);
    for k in 0..n {
        let mut plus = point.clone();
        let mut minus = point.clone();
        plus[k] += step;
        minus[k] -= step;
        let fp = map(&plus)?;
        let fm = map(&minus)?;
        if fp.len() != fm.len() {
            return Err(Error::DimensionMismatch("map output length changed between evaluations".into()));
        }
        cols.push((fp - fm) / (2.0 * step));
    }
    let rows = cols.first().map_or(0, |c| c.len());
    Ok(DMatrix::from_fn(rows, n, |i, j| cols[j][i]))
}

pub fn matrix_from_rows(rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(Error::DimensionMismatch("ragged matrix rows".into()));
    }
    Ok(DMatrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
}

pub fn matrix_to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

/// 2-norm condition number from singular values; `inf` for singular matrices.
pub fn condition_number(m: &DMatrix<f64>) -> f64 {
    let sv = m.clone().singular_values();
    let max = sv.iter().copied().fold(0.0, f64::max);
    let min = sv.iter().copied().fold(f64::INFINITY, f64::min);
    if min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

pub fn block_diag(blocks: &[DMatrix<f64>]) -> DMatrix<f64> {
    let rows: usize = blocks.iter().map(|b| b.nrows()).sum();
    let cols: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = DMatrix::zeros(rows, cols);
    let (mut r, mut c) = (0, 0);
    for b in blocks {
        out.view_mut((r, c), (b.nrows(), b.ncols())).copy_from(b);
        r += b.nrows();
        c += b.ncols();
    }
    out
}

/// Symmetric PSD-style check: `λmax(M) ≤ tol`.
pub fn is_nsd(m: &SymmetricMatrix, tol: f64) -> bool {
    m.lambda_extremes().1 <= tol
}

/// Serializable row-major matrix used by configs and reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Rows(pub Vec<Vec<f64>>);

impl Rows {
    pub fn to_matrix(&self) -> Result<DMatrix<f64>> {
        matrix_from_rows(&self.0)
    }
}

impl From<&DMatrix<f64>> for Rows {
    fn from(m: &DMatrix<f64>) -> Self {
        Rows(matrix_to_rows(m))
    }
}
