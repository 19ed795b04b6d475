//! Dense linear algebra for the tabular game oracle and local least-squares
//! fits. Systems here are small (state counts in the tens) and the Bellman
//! matrices `I - γP` are strictly diagonally dominant, so Gaussian
//! elimination with partial pivoting is exact enough for the 1e-10 residual
//! contracts elsewhere in the crate.

use crate::scalar::Scalar;

/// Errors from the dense solver.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum LinalgError {
    /// Pivot below machine-scale tolerance: the matrix is singular to working precision.
    #[error("matrix is singular to working precision (pivot too small at column {col})")]
    Singular { col: usize },
    /// Matrix/vector dimensions do not agree.
    #[error("dimension mismatch: matrix is {rows}x{cols}, rhs has length {rhs}")]
    Shape { rows: usize, cols: usize, rhs: usize },
}

/// Row-major dense matrix view used by the solver.
#[derive(Debug, Clone)]
pub struct Matrix<T> {
    pub rows: usize,
    pub cols: usize,
    /// Row-major storage, `data[r * cols + c]`.
    pub data: Vec<T>,
}

impl<T: Scalar> Matrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix { rows, cols, data: vec![T::zero(); rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = T::one();
        }
        m
    }

    #[inline]
    pub fn at(&self, r: usize, c: usize) -> T {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn at_mut(&mut self, r: usize, c: usize) -> &mut T {
        &mut self.data[r * self.cols + c]
    }

    /// `self * v` for a column vector `v`.
    pub fn mul_vec(&self, v: &[T]) -> Vec<T> {
        assert_eq!(self.cols, v.len());
        (0..self.rows)
            .map(|r| (0..self.cols).map(|c| self.at(r, c) * v[c]).sum())
            .collect()
    }

    /// `self^T * v`.
    pub fn tr_mul_vec(&self, v: &[T]) -> Vec<T> {
        assert_eq!(self.rows, v.len());
        let mut out = vec![T::zero(); self.cols];
        for r in 0..self.rows {
            let vr = v[r];
            for c in 0..self.cols {
                out[c] = out[c] + self.at(r, c) * vr;
            }
        }
        out
    }
}

/// Solves `A x = b` by Gaussian elimination with partial pivoting.
///
/// `a` is consumed as the working copy. Returns `x` with `b.len()` entries.
pub fn solve<T: Scalar>(mut a: Matrix<T>, mut b: Vec<T>) -> Result<Vec<T>, LinalgError> {
    let n = a.rows;
    if a.cols != n || b.len() != n {
        return Err(LinalgError::Shape { rows: a.rows, cols: a.cols, rhs: b.len() });
    }
    for col in 0..n {
        // Partial pivot: largest |a[r][col]| over r >= col.
        let mut pivot_row = col;
        let mut pivot_mag = a.at(col, col).abs();
        for r in col + 1..n {
            let mag = a.at(r, col).abs();
            if mag > pivot_mag {
                pivot_mag = mag;
                pivot_row = r;
            }
        }
        if !(pivot_mag > T::epsilon() * crate::scalar::real::<T>(16.0)) || !pivot_mag.is_finite() {
            return Err(LinalgError::Singular { col });
        }
        if pivot_row != col {
            for c in 0..n {
                let tmp = a.at(col, c);
                *a.at_mut(col, c) = a.at(pivot_row, c);
                *a.at_mut(pivot_row, c) = tmp;
            }
            b.swap(col, pivot_row);
        }
        let pivot = a.at(col, col);
        for r in col + 1..n {
            let factor = a.at(r, col) / pivot;
            if factor == T::zero() {
                continue;
            }
            *a.at_mut(r, col) = T::zero();
            for c in col + 1..n {
                let v = a.at(r, c) - factor * a.at(col, c);
                *a.at_mut(r, c) = v;
            }
            b[r] = b[r] - factor * b[col];
        }
    }
    // Back substitution.
    let mut x = vec![T::zero(); n];
    for r in (0..n).rev() {
        let mut acc = b[r];
        for c in r + 1..n {
            acc = acc - a.at(r, c) * x[c];
        }
        x[r] = acc / a.at(r, r);
    }
    Ok(x)
}

/// Maximum absolute residual `|A x - b|_inf`; used to enforce solve contracts.
pub fn residual_inf<T: Scalar>(a: &Matrix<T>, x: &[T], b: &[T]) -> T {
    a.mul_vec(x)
        .iter()
        .zip(b)
        .map(|(ax, bi)| (*ax - *bi).abs())
        .fold(T::zero(), T::max)
}

/// Least-squares solve of `X c = y` via the normal equations `X^T X c = X^T y`.
///
/// Adequate for the low-order polynomial fits used by the smoother (design
/// matrices are tiny and centered, keeping the Gram matrix well conditioned).
pub fn least_squares<T: Scalar>(x: &Matrix<T>, y: &[T]) -> Result<Vec<T>, LinalgError> {
    assert_eq!(x.rows, y.len());
    let p = x.cols;
    let mut gram = Matrix::zeros(p, p);
    for i in 0..p {
        for j in 0..p {
            let mut acc = T::zero();
            for r in 0..x.rows {
                acc = acc + x.at(r, i) * x.at(r, j);
            }
            *gram.at_mut(i, j) = acc;
        }
    }
    let rhs = x.tr_mul_vec(y);
    solve(gram, rhs)
}
