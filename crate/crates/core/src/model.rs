//! Polyhedral constraint sets, prioritized hierarchies and the natural
//! violation function.
//!
//! A [`Polyhedron`] is stored in double-sided form `lower <= A z <= upper`.
//! Absent sides are the IEEE infinities, which act as the "unbounded"
//! sentinel: code that attaches slack or computes residuals always checks
//! `is_finite()` first, so no finite stand-in value ever leaks into the
//! arithmetic.

use std::fmt;

use nalgebra::{DMatrix, DVector};

use crate::error::ModelError;

/// Negative perturbations down to this magnitude are regularization noise
/// and are clamped to zero by [`Polyhedron::perturb`].
pub const PERTURBATION_CLAMP_TOL: f64 = 1e-8;

/// Relative feasibility tolerance used by [`Polyhedron::contains_default`].
pub const CONTAINS_REL_TOL: f64 = 1e-8;

/// Which bound of a double-sided row is meant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Side {
    Lower,
    Upper,
}

impl Side {
    /// Orientation of the row when written as a single-sided `<=` constraint.
    pub fn sign(self) -> f64 {
        match self {
            Side::Lower => -1.0,
            Side::Upper => 1.0,
        }
    }

    pub fn opposite(self) -> Side {
        match self {
            Side::Lower => Side::Upper,
            Side::Upper => Side::Lower,
        }
    }
}

/// `{ z : lower <= A z <= upper }`.
#[derive(Debug, Clone, PartialEq)]
pub struct Polyhedron {
    a: DMatrix<f64>,
    lower: DVector<f64>,
    upper: DVector<f64>,
}

impl Polyhedron {
    /// Builds a polyhedron, checking only that the shapes agree. Value
    /// invariants (ordered bounds, finiteness) are reported by
    /// [`Hierarchy::validate`] instead, so malformed data can still be loaded
    /// and diagnosed.
    pub fn new(a: DMatrix<f64>, lower: DVector<f64>, upper: DVector<f64>) -> Result<Self, ModelError> {
        if lower.len() != a.nrows() || upper.len() != a.nrows() {
            return Err(ModelError::DimensionMismatch {
                expected: a.nrows(),
                found: lower.len().max(upper.len()),
            });
        }
        Ok(Self { a, lower, upper })
    }

    /// `{ A z <= upper }`.
    pub fn upper_only(a: DMatrix<f64>, upper: DVector<f64>) -> Result<Self, ModelError> {
        let lower = DVector::from_element(upper.len(), f64::NEG_INFINITY);
        Self::new(a, lower, upper)
    }

    /// The whole space `R^n` (no rows).
    pub fn unconstrained(n: usize) -> Self {
        Self {
            a: DMatrix::zeros(0, n),
            lower: DVector::zeros(0),
            upper: DVector::zeros(0),
        }
    }

    /// Convenience constructor from row slices; mostly used by tests and
    /// fixtures.
    pub fn from_rows(n: usize, rows: &[(f64, &[f64], f64)]) -> Result<Self, ModelError> {
        let mut a = DMatrix::zeros(rows.len(), n);
        let mut lower = DVector::zeros(rows.len());
        let mut upper = DVector::zeros(rows.len());
        for (r, (lo, coeffs, hi)) in rows.iter().enumerate() {
            if coeffs.len() != n {
                return Err(ModelError::DimensionMismatch { expected: n, found: coeffs.len() });
            }
            for (c, v) in coeffs.iter().enumerate() {
                a[(r, c)] = *v;
            }
            lower[r] = *lo;
            upper[r] = *hi;
        }
        Self::new(a, lower, upper)
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn lower(&self) -> &DVector<f64> {
        &self.lower
    }

    pub fn upper(&self) -> &DVector<f64> {
        &self.upper
    }

    pub fn nrows(&self) -> usize {
        self.a.nrows()
    }

    pub fn dim(&self) -> usize {
        self.a.ncols()
    }

    pub fn is_equality(&self, row: usize) -> bool {
        self.lower[row] == self.upper[row]
    }

    pub fn bound(&self, row: usize, side: Side) -> f64 {
        match side {
            Side::Lower => self.lower[row],
            Side::Upper => self.upper[row],
        }
    }

    fn check_dim(&self, z: &DVector<f64>) -> Result<(), ModelError> {
        if z.len() != self.dim() {
            return Err(ModelError::DimensionMismatch { expected: self.dim(), found: z.len() });
        }
        Ok(())
    }

    /// Returns `(lower - A z, A z - upper)`. Positive entries are violations;
    /// absent sides yield `-inf`.
    pub fn residual(&self, z: &DVector<f64>) -> Result<(DVector<f64>, DVector<f64>), ModelError> {
        self.check_dim(z)?;
        let az = &self.a * z;
        let lower_side = DVector::from_fn(self.nrows(), |r, _| self.lower[r] - az[r]);
        let upper_side = DVector::from_fn(self.nrows(), |r, _| az[r] - self.upper[r]);
        Ok((lower_side, upper_side))
    }

    /// Largest violation over all rows and sides, zero when `z` is inside.
    pub fn max_violation(&self, z: &DVector<f64>) -> Result<f64, ModelError> {
        let (lo, up) = self.residual(z)?;
        Ok(lo.iter().chain(up.iter()).fold(0.0_f64, |acc, &v| acc.max(v)))
    }

    /// True iff every residual entry is `<= tol`.
    pub fn contains(&self, z: &DVector<f64>, tol: f64) -> Result<bool, ModelError> {
        let (lo, up) = self.residual(z)?;
        Ok(lo.iter().chain(up.iter()).all(|&v| v <= tol))
    }

    /// Membership with the per-row tolerance `1e-8 * (1 + |bound|)`.
    pub fn contains_default(&self, z: &DVector<f64>) -> Result<bool, ModelError> {
        let (lo, up) = self.residual(z)?;
        Ok((0..self.nrows()).all(|r| {
            let lo_ok = !self.lower[r].is_finite()
                || lo[r] <= CONTAINS_REL_TOL * (1.0 + self.lower[r].abs());
            let up_ok = !self.upper[r].is_finite()
                || up[r] <= CONTAINS_REL_TOL * (1.0 + self.upper[r].abs());
            lo_ok && up_ok
        }))
    }

    /// Relaxes every row symmetrically: `lower - eps <= A z <= upper + eps`.
    /// Small negative entries (down to [`PERTURBATION_CLAMP_TOL`]) are clamped
    /// to zero.
    pub fn perturb(&self, eps: &DVector<f64>) -> Result<Polyhedron, ModelError> {
        if eps.len() != self.nrows() {
            return Err(ModelError::DimensionMismatch { expected: self.nrows(), found: eps.len() });
        }
        let mut out = self.clone();
        for (r, &e) in eps.iter().enumerate() {
            if e < -PERTURBATION_CLAMP_TOL {
                return Err(ModelError::NegativePerturbation { row: r, value: e });
            }
            let e = e.max(0.0);
            out.lower[r] -= e;
            out.upper[r] += e;
        }
        Ok(out)
    }

    /// Stacks `self` on top of `other` (set intersection).
    pub fn intersect(&self, other: &Polyhedron) -> Result<Polyhedron, ModelError> {
        if self.dim() != other.dim() {
            return Err(ModelError::DimensionMismatch { expected: self.dim(), found: other.dim() });
        }
        let m = self.nrows() + other.nrows();
        let n = self.dim();
        let a = DMatrix::from_fn(m, n, |r, c| {
            if r < self.nrows() {
                self.a[(r, c)]
            } else {
                other.a[(r - self.nrows(), c)]
            }
        });
        let lower = DVector::from_iterator(m, self.lower.iter().chain(other.lower.iter()).copied());
        let upper = DVector::from_iterator(m, self.upper.iter().chain(other.upper.iter()).copied());
        Polyhedron::new(a, lower, upper)
    }
}

/// One priority level: a polyhedron and the diagonal of its weight matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct HierarchyLevel {
    pub poly: Polyhedron,
    pub weights: DVector<f64>,
}

impl HierarchyLevel {
    /// Level with identity weights.
    pub fn new(poly: Polyhedron) -> Self {
        let weights = DVector::from_element(poly.nrows(), 1.0);
        Self { poly, weights }
    }

    pub fn with_weights(poly: Polyhedron, weights: DVector<f64>) -> Result<Self, ModelError> {
        if weights.len() != poly.nrows() {
            return Err(ModelError::DimensionMismatch { expected: poly.nrows(), found: weights.len() });
        }
        Ok(Self { poly, weights })
    }

    pub fn nrows(&self) -> usize {
        self.poly.nrows()
    }

    /// Natural violation function
    /// `|| max(0, W (A z - upper), W (lower - A z)) ||^2`.
    pub fn violation(&self, z: &DVector<f64>) -> Result<f64, ModelError> {
        let (lo, up) = self.poly.residual(z)?;
        Ok((0..self.nrows())
            .map(|r| {
                let v = (self.weights[r] * up[r]).max(self.weights[r] * lo[r]).max(0.0);
                v * v
            })
            .sum())
    }
}

/// Default regularization weight.
pub const DEFAULT_RHO: f64 = 1e-3;

/// Ordered collection of levels; index 0 is the highest (hard) priority.
#[derive(Debug, Clone, PartialEq)]
pub struct Hierarchy {
    pub levels: Vec<HierarchyLevel>,
    pub rho: f64,
}

impl Hierarchy {
    pub fn new(levels: Vec<HierarchyLevel>, rho: f64) -> Self {
        Self { levels, rho }
    }

    pub fn num_levels(&self) -> usize {
        self.levels.len()
    }

    /// Variable dimension, taken from the first level.
    pub fn dim(&self) -> usize {
        self.levels.first().map_or(0, |l| l.poly.dim())
    }

    pub fn total_rows(&self) -> usize {
        self.levels.iter().map(HierarchyLevel::nrows).sum()
    }

    /// Offset of each level's first row in the stacked constraint matrix.
    pub fn row_offsets(&self) -> Vec<usize> {
        let mut acc = 0;
        self.levels
            .iter()
            .map(|l| {
                let start = acc;
                acc += l.nrows();
                start
            })
            .collect()
    }

    /// Checks every structural and value invariant, returning one diagnostic
    /// per problem found. An empty list means the hierarchy is well formed.
    pub fn validate(&self) -> Vec<Diagnostic> {
        let mut out = Vec::new();
        if self.levels.is_empty() {
            out.push(Diagnostic::new(None, None, DiagnosticKind::NoLevels));
        }
        if !(self.rho > 0.0 && self.rho.is_finite()) {
            out.push(Diagnostic::new(None, None, DiagnosticKind::NonpositiveRho(self.rho)));
        }
        let n = self.dim();
        for (li, level) in self.levels.iter().enumerate() {
            let poly = &level.poly;
            if poly.dim() != n {
                out.push(Diagnostic::new(
                    Some(li),
                    None,
                    DiagnosticKind::DimensionMismatch { expected: n, found: poly.dim() },
                ));
            }
            if level.weights.len() != poly.nrows() {
                out.push(Diagnostic::new(
                    Some(li),
                    None,
                    DiagnosticKind::WeightCount { expected: poly.nrows(), found: level.weights.len() },
                ));
            }
            for r in 0..poly.nrows() {
                let (lo, hi) = (poly.lower[r], poly.upper[r]);
                if lo.is_nan() || hi.is_nan() || poly.a.row(r).iter().any(|v| !v.is_finite()) {
                    out.push(Diagnostic::new(Some(li), Some(r), DiagnosticKind::NonFinite));
                    continue;
                }
                if lo > hi {
                    out.push(Diagnostic::new(Some(li), Some(r), DiagnosticKind::InvertedBounds));
                }
                if lo == f64::INFINITY || hi == f64::NEG_INFINITY {
                    out.push(Diagnostic::new(Some(li), Some(r), DiagnosticKind::InvertedBounds));
                }
                if !lo.is_finite() && !hi.is_finite() {
                    out.push(Diagnostic::new(Some(li), Some(r), DiagnosticKind::UnboundedRow));
                }
                if poly.a.row(r).iter().all(|&v| v == 0.0) {
                    out.push(Diagnostic::new(Some(li), Some(r), DiagnosticKind::ZeroRow));
                }
                if let Some(&w) = level.weights.get(r) {
                    if !(w > 0.0 && w.is_finite()) {
                        out.push(Diagnostic::new(Some(li), Some(r), DiagnosticKind::NonpositiveWeight(w)));
                    }
                }
            }
        }
        out
    }

    /// Diagnostics that make the hierarchy unsolvable. All-zero rows are
    /// legal (they encode empty or trivial sets) and are reported by
    /// [`validate`](Self::validate) only as warnings.
    pub fn blocking_diagnostics(&self) -> Vec<Diagnostic> {
        self.validate()
            .into_iter()
            .filter(|d| !matches!(d.kind, DiagnosticKind::ZeroRow))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum DiagnosticKind {
    NoLevels,
    NonpositiveRho(f64),
    DimensionMismatch { expected: usize, found: usize },
    WeightCount { expected: usize, found: usize },
    NonpositiveWeight(f64),
    InvertedBounds,
    UnboundedRow,
    NonFinite,
    ZeroRow,
}

/// One invariant violation found by [`Hierarchy::validate`]. Levels and rows
/// are zero-based.
#[derive(Debug, Clone, PartialEq)]
pub struct Diagnostic {
    pub level: Option<usize>,
    pub row: Option<usize>,
    pub kind: DiagnosticKind,
}

impl Diagnostic {
    fn new(level: Option<usize>, row: Option<usize>, kind: DiagnosticKind) -> Self {
        Self { level, row, kind }
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let Some(l) = self.level {
            write!(f, "level {}", l + 1)?;
            if let Some(r) = self.row {
                write!(f, ", row {}", r + 1)?;
            }
            write!(f, ": ")?;
        }
        match &self.kind {
            DiagnosticKind::NoLevels => write!(f, "hierarchy has no levels"),
            DiagnosticKind::NonpositiveRho(r) => write!(f, "nonpositive rho ({r})"),
            DiagnosticKind::DimensionMismatch { expected, found } => {
                write!(f, "dimension mismatch (expected {expected} columns, found {found})")
            }
            DiagnosticKind::WeightCount { expected, found } => {
                write!(f, "weight count mismatch (expected {expected}, found {found})")
            }
            DiagnosticKind::NonpositiveWeight(w) => write!(f, "nonpositive weight ({w})"),
            DiagnosticKind::InvertedBounds => write!(f, "lower bound exceeds upper bound"),
            DiagnosticKind::UnboundedRow => write!(f, "row has no finite bound"),
            DiagnosticKind::NonFinite => write!(f, "non-finite coefficient"),
            DiagnosticKind::ZeroRow => write!(f, "all-zero row"),
        }
    }
}
