//! Incremental `L D L^T` factorization of the working-set Gram matrix.
//!
//! The least-distance problem for one level lives in the variables
//! `x = [z; eps_tilde]` with constraint matrix
//!
//! ```text
//!     M = [ A_1 ..      0           ]
//!         [ A_i   -rho * W_i^{-1}   ]
//! ```
//!
//! where `W_i` is the weight diagonal of the current (soft) level. The slack
//! block is never materialized: off-diagonal Gram entries of two distinct
//! rows only see the `A` part, and the diagonal entry of a current-level row
//! picks up `rho^2 / w_k^2`. Everything here therefore works on rows of `A`
//! (with `n_z` columns) instead of rows of `M` (with `n_z + m_i` columns).

use nalgebra::DMatrix;

use crate::error::FactorError;
use crate::model::Side;

/// Relative pivot threshold below which a new row is declared linearly
/// dependent on the working set.
pub const DEPENDENCY_REL_TOL: f64 = 1e-12;

/// Threshold on the slack part of a nearly dependent row's residual. It is
/// free of cancellation, so it can be much smaller than the pivot threshold.
pub const SLACK_REL_TOL: f64 = 1e-16;

/// Dense row-major matrix; rows of the stacked constraint matrix are read far
/// more often than columns.
#[derive(Debug, Clone, PartialEq)]
pub struct RowMatrix {
    nrows: usize,
    ncols: usize,
    data: Vec<f64>,
}

impl RowMatrix {
    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        Self { nrows, ncols, data: vec![0.0; nrows * ncols] }
    }

    pub fn from_dmatrix(a: &DMatrix<f64>) -> Self {
        let mut out = Self::zeros(a.nrows(), a.ncols());
        for r in 0..a.nrows() {
            for c in 0..a.ncols() {
                out.data[r * a.ncols() + c] = a[(r, c)];
            }
        }
        out
    }

    pub fn from_rows(ncols: usize, rows: &[&[f64]]) -> Self {
        let mut data = Vec::with_capacity(rows.len() * ncols);
        for r in rows {
            assert_eq!(r.len(), ncols, "row length mismatch");
            data.extend_from_slice(r);
        }
        Self { nrows: rows.len(), ncols, data }
    }

    pub fn to_dmatrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.nrows, self.ncols, &self.data)
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.ncols..(r + 1) * self.ncols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.ncols..(r + 1) * self.ncols]
    }

    pub fn dot_rows(&self, r: usize, s: usize) -> f64 {
        dot(self.row(r), self.row(s))
    }

    /// Appends the rows of `other`.
    pub fn append(&mut self, other: &RowMatrix) {
        assert_eq!(self.ncols, other.ncols, "column mismatch");
        self.data.extend_from_slice(&other.data);
        self.nrows += other.nrows;
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Where the current level's rows start and how their implicit slack columns
/// are scaled.
#[derive(Debug, Clone, PartialEq)]
pub struct SlackSpec {
    /// First stacked row that belongs to the current (soft) level.
    pub slack_start: usize,
    /// `1 / w_k^2` for each current-level row `k`.
    pub inv_weights_sq: Vec<f64>,
    pub rho: f64,
}

impl SlackSpec {
    /// Spec for a problem whose `m` rows are all hard.
    pub fn hard(m: usize) -> Self {
        Self { slack_start: m, inv_weights_sq: Vec::new(), rho: 0.0 }
    }

    pub fn from_weights(slack_start: usize, weights: &[f64], rho: f64) -> Self {
        Self {
            slack_start,
            inv_weights_sq: weights.iter().map(|w| 1.0 / (w * w)).collect(),
            rho,
        }
    }

    pub fn is_soft(&self, row: usize) -> bool {
        row >= self.slack_start && row - self.slack_start < self.inv_weights_sq.len()
    }

    /// `rho^2 [W^{-2}]_kk` for current-level rows, zero otherwise.
    pub fn diagonal_correction(&self, row: usize) -> f64 {
        if self.is_soft(row) {
            self.rho * self.rho * self.inv_weights_sq[row - self.slack_start]
        } else {
            0.0
        }
    }

    /// `rho / w_k` for current-level rows: the magnitude of the implicit
    /// slack coefficient in `M`.
    pub fn slack_coefficient(&self, row: usize) -> f64 {
        if self.is_soft(row) {
            self.rho * self.inv_weights_sq[row - self.slack_start].sqrt()
        } else {
            0.0
        }
    }
}

/// A working-set member: a row of the stacked matrix held at one of its
/// bounds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ActiveRow {
    pub row: usize,
    pub side: Side,
}

impl ActiveRow {
    pub fn new(row: usize, side: Side) -> Self {
        Self { row, side }
    }

    pub fn upper(row: usize) -> Self {
        Self::new(row, Side::Upper)
    }

    pub fn lower(row: usize) -> Self {
        Self::new(row, Side::Lower)
    }
}

/// Result of trying to append a row.
#[derive(Debug, Clone, PartialEq)]
pub enum AddOutcome {
    Added { delta: f64 },
    /// The row lies (numerically) in the span of the factorized rows. `l`
    /// solves `L D l = [M]_W [M]_row^T` and is what the caller needs to
    /// express the row in terms of the working set.
    Dependent { delta: f64, l: Vec<f64> },
}

/// Unit lower-triangular `L` (strict lower part stored row by row) and
/// diagonal `D` with `L D L^T = [M]_W [M]_W^T`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LdlFactors {
    l: Vec<Vec<f64>>,
    d: Vec<f64>,
    order: Vec<ActiveRow>,
}

impl LdlFactors {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.d.len()
    }

    pub fn is_empty(&self) -> bool {
        self.d.is_empty()
    }

    pub fn order(&self) -> &[ActiveRow] {
        &self.order
    }

    pub fn diag(&self) -> &[f64] {
        &self.d
    }

    /// Strict lower part of row `k` of `L`.
    pub fn l_row(&self, k: usize) -> &[f64] {
        &self.l[k]
    }

    pub fn position(&self, row: usize) -> Option<usize> {
        self.order.iter().position(|e| e.row == row)
    }

    /// Gram products `[M]_W [M]_row^T` for a row not in the working set. The
    /// slack blocks of distinct rows never overlap, so only `A` enters.
    pub fn cross_products(&self, a: &RowMatrix, entry: ActiveRow) -> Vec<f64> {
        let s = entry.side.sign();
        self.order
            .iter()
            .map(|w| s * w.side.sign() * a.dot_rows(w.row, entry.row))
            .collect()
    }

    /// Tries to append `entry`. On success the factorization grows by one;
    /// on dependence it is left untouched.
    pub fn add_row(&mut self, a: &RowMatrix, entry: ActiveRow, spec: &SlackSpec) -> Result<AddOutcome, FactorError> {
        if entry.row >= a.nrows() {
            return Err(FactorError::RowOutOfRange { row: entry.row, nrows: a.nrows() });
        }
        if self.order.iter().any(|w| w.row == entry.row) {
            return Err(FactorError::DuplicateRow(entry.row));
        }
        let g = self.cross_products(a, entry);
        // Forward substitution for y = D l with L y = g.
        let k = g.len();
        let mut y = g;
        for i in 0..k {
            let li = &self.l[i];
            let mut acc = y[i];
            for (j, lij) in li.iter().enumerate() {
                acc -= lij * y[j];
            }
            y[i] = acc;
        }
        let l: Vec<f64> = y.iter().zip(&self.d).map(|(yi, di)| yi / di).collect();
        let norm_sq = a.dot_rows(entry.row, entry.row);
        let ldl: f64 = l.iter().zip(&y).map(|(li, yi)| li * yi).sum();
        let mut delta = norm_sq + spec.diagonal_correction(entry.row) - ldl;
        if delta <= DEPENDENCY_REL_TOL * (1.0 + norm_sq) {
            // The residual's slack components are computed without the
            // cancellation in `delta` and bound it from below. Rows of A that
            // are nearly dependent but reach the slack columns of soft rows
            // are still independent in M.
            let c = self.dependency_coefficients(&l);
            let slack = spec.diagonal_correction(entry.row)
                + self.order.iter().zip(&c).map(|(w, ck)| (ck * spec.slack_coefficient(w.row)).powi(2)).sum::<f64>();
            if slack <= SLACK_REL_TOL * (1.0 + norm_sq) {
                return Ok(AddOutcome::Dependent { delta, l });
            }
            delta = delta.max(slack);
        }
        self.l.push(l);
        self.d.push(delta);
        self.order.push(entry);
        Ok(AddOutcome::Added { delta })
    }

    /// Removes the entry at `position`, updating the trailing block with the
    /// positive rank-one term `d_p * c c^T` where `c` is the removed column
    /// of `L`.
    pub fn remove_row(&mut self, position: usize) -> Result<ActiveRow, FactorError> {
        let n = self.len();
        if position >= n {
            return Err(FactorError::PositionOutOfRange { position, len: n });
        }
        let removed = self.order.remove(position);
        let mut alpha = self.d.remove(position);
        self.l.remove(position);
        let mut w: Vec<f64> = self.l[position..].iter_mut().map(|row| row.remove(position)).collect();

        // Trailing rows are now indices position.. in the shrunk factors.
        let tail = w.len();
        for j in 0..tail {
            let pj = w[j];
            let dj = self.d[position + j];
            let d_new = dj + alpha * pj * pj;
            let beta = pj * alpha / d_new;
            alpha = dj * alpha / d_new;
            self.d[position + j] = d_new;
            for r in (j + 1)..tail {
                let lrj = &mut self.l[position + r][position + j];
                w[r] -= pj * *lrj;
                *lrj += beta * w[r];
            }
        }
        Ok(removed)
    }

    /// Solves `L D L^T x = rhs`.
    pub fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>, FactorError> {
        let n = self.len();
        if rhs.len() != n {
            return Err(FactorError::DimensionMismatch { expected: n, found: rhs.len() });
        }
        if let Some(&bad) = self.d.iter().find(|d| !(d.abs() > 0.0) || !d.is_finite()) {
            return Err(FactorError::Degenerate(bad));
        }
        let mut x = rhs.to_vec();
        for i in 0..n {
            let mut acc = x[i];
            for (j, lij) in self.l[i].iter().enumerate() {
                acc -= lij * x[j];
            }
            x[i] = acc;
        }
        for (xi, di) in x.iter_mut().zip(&self.d) {
            *xi /= di;
        }
        self.back_substitute(&mut x);
        Ok(x)
    }

    /// In-place `x <- L^{-T} x`.
    pub fn back_substitute(&self, x: &mut [f64]) {
        let n = self.len();
        for i in (0..n).rev() {
            let xi = x[i];
            for (j, lij) in self.l[i].iter().enumerate() {
                x[j] -= lij * xi;
            }
        }
    }

    /// Expansion coefficients `c` with `[M]_row ~= sum_w c_w [M]_w`, given
    /// the `l` from a dependent [`AddOutcome`].
    pub fn dependency_coefficients(&self, l: &[f64]) -> Vec<f64> {
        let mut c = l.to_vec();
        self.back_substitute(&mut c);
        c
    }

    /// Fresh factorization of `entries` in the given order.
    pub fn refactor(entries: &[ActiveRow], a: &RowMatrix, spec: &SlackSpec) -> Result<Self, FactorError> {
        let mut f = Self::new();
        for &e in entries {
            match f.add_row(a, e, spec)? {
                AddOutcome::Added { .. } => {}
                AddOutcome::Dependent { delta, .. } => return Err(FactorError::Dependent { delta }),
            }
        }
        Ok(f)
    }

    /// Fresh factorization of `entries` in order, skipping those dependent
    /// on the ones before them. Returns the positions that were skipped.
    pub fn refactor_skipping(entries: &[ActiveRow], a: &RowMatrix, spec: &SlackSpec) -> Result<(Self, Vec<usize>), FactorError> {
        let mut f = Self::new();
        let mut skipped = Vec::new();
        for (k, &e) in entries.iter().enumerate() {
            if let AddOutcome::Dependent { .. } = f.add_row(a, e, spec)? {
                skipped.push(k);
            }
        }
        Ok((f, skipped))
    }

    /// Reassembles `L diag(D) L^T`.
    pub fn reconstruct(&self) -> DMatrix<f64> {
        let n = self.len();
        let l = DMatrix::from_fn(n, n, |r, c| {
            if r == c {
                1.0
            } else if c < r {
                self.l[r][c]
            } else {
                0.0
            }
        });
        let d = DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(&self.d));
        &l * d * l.transpose()
    }

    /// Dense unit lower-triangular factor.
    pub fn l_dense(&self) -> DMatrix<f64> {
        let n = self.len();
        DMatrix::from_fn(n, n, |r, c| {
            if r == c {
                1.0
            } else if c < r {
                self.l[r][c]
            } else {
                0.0
            }
        })
    }
}
