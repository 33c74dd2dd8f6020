//! Dual active-set solver for a single level of the hierarchy.
//!
//! Level `i` solves
//!
//! ```text
//!     min  ||W_i eps||^2 + rho^2 ||z||^2
//!     s.t. lower_j - eps*_j <= A_j z <= upper_j + eps*_j     j < i   (hard)
//!          lower_i - eps    <= A_i z <= upper_i + eps                (soft)
//! ```
//!
//! After the change of variables `eps_tilde = W_i eps / rho` this is the
//! least-distance problem `min 1/2 ||x||^2 s.t. M x <= d` in
//! `x = [z; eps_tilde]`. The solver iterates on the dual: for the current
//! working set it solves `[M]_W [M]_W^T lambda = -[d]_W`, recovers the primal
//! point as `x = -M^T lambda`, and then either drops a constraint with a
//! negative multiplier or adds the most violated one.

use std::collections::HashSet;

use nalgebra::DVector;

use crate::error::SolveError;
use crate::factorization::{dot, ActiveRow, AddOutcome, LdlFactors, RowMatrix, SlackSpec};
use crate::model::Side;

/// Relative error of a stationary point, estimated by its first refinement
/// step, above which the factorization is rebuilt from scratch.
const REFACTOR_REL_TOL: f64 = 1e-8;

/// Tolerances and limits for [`solve_level`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverSettings {
    /// Row `r` counts as satisfied while its violation is at most
    /// `primal_rel_tol * (1 + |bound_r|)`.
    pub primal_rel_tol: f64,
    /// Ceiling for the primal tolerance. When the working set cycles, or a
    /// hard inconsistency is no larger than roundoff, the tolerance is raised
    /// tenfold at a time up to this value.
    pub max_primal_rel_tol: f64,
    /// Multipliers above `-dual_tol` are treated as nonnegative.
    pub dual_tol: f64,
    /// Overrides the default limit of `100 * (n_z + m)` iterations.
    pub max_iter: Option<usize>,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self { primal_rel_tol: 1e-8, max_primal_rel_tol: 1e-6, dual_tol: 1e-11, max_iter: None }
    }
}

impl SolverSettings {
    pub fn primal_tol(&self, bound: f64) -> f64 {
        self.primal_rel_tol * (1.0 + bound.abs())
    }
}

/// Ordered set of constraints held at equality.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct WorkingSet {
    entries: Vec<ActiveRow>,
}

impl WorkingSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Keeps the first occurrence of each row; later entries for the same
    /// row are dropped.
    pub fn from_entries(entries: impl IntoIterator<Item = ActiveRow>) -> Self {
        let mut ws = Self::new();
        for e in entries {
            if !ws.contains_row(e.row) {
                ws.entries.push(e);
            }
        }
        ws
    }

    pub fn entries(&self) -> &[ActiveRow] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn contains_row(&self, row: usize) -> bool {
        self.entries.iter().any(|e| e.row == row)
    }

    /// Rows in ascending order, with sides.
    pub fn sorted(&self) -> Vec<ActiveRow> {
        let mut v = self.entries.clone();
        v.sort();
        v
    }
}

/// Stacked constraint data for one level, with the current level's rows at
/// the end.
#[derive(Debug, Clone)]
pub struct LevelProblem {
    a: RowMatrix,
    lower: Vec<f64>,
    upper: Vec<f64>,
    slack: SlackSpec,
    // Norms of the rows of the implicit M, used to scale violations.
    m_row_norms: Vec<f64>,
}

impl LevelProblem {
    /// `weights` are the current level's weights; its rows are the last
    /// `weights.len()` rows of `a`.
    pub fn new(a: RowMatrix, lower: Vec<f64>, upper: Vec<f64>, weights: &[f64], rho: f64) -> Result<Self, SolveError> {
        let m = a.nrows();
        if lower.len() != m || upper.len() != m {
            return Err(SolveError::DimensionMismatch { expected: m, found: lower.len().max(upper.len()) });
        }
        if weights.len() > m {
            return Err(SolveError::DimensionMismatch { expected: m, found: weights.len() });
        }
        let slack = SlackSpec::from_weights(m - weights.len(), weights, rho);
        Ok(Self::with_spec(a, lower, upper, slack))
    }

    /// Problem with hard rows only (no slack).
    pub fn hard(a: RowMatrix, lower: Vec<f64>, upper: Vec<f64>) -> Result<Self, SolveError> {
        Self::new(a, lower, upper, &[], 0.0)
    }

    fn with_spec(a: RowMatrix, lower: Vec<f64>, upper: Vec<f64>, slack: SlackSpec) -> Self {
        let m_row_norms = (0..a.nrows())
            .map(|r| (a.dot_rows(r, r) + slack.diagonal_correction(r)).sqrt())
            .collect();
        Self { a, lower, upper, slack, m_row_norms }
    }

    pub fn a(&self) -> &RowMatrix {
        &self.a
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn slack(&self) -> &SlackSpec {
        &self.slack
    }

    pub fn dim(&self) -> usize {
        self.a.ncols()
    }

    pub fn nrows(&self) -> usize {
        self.a.nrows()
    }

    /// Number of soft rows (the current level).
    pub fn soft_rows(&self) -> usize {
        self.slack.inv_weights_sq.len()
    }

    pub fn bound(&self, entry: ActiveRow) -> f64 {
        match entry.side {
            Side::Lower => self.lower[entry.row],
            Side::Upper => self.upper[entry.row],
        }
    }

    /// Right-hand side of the single-sided form `[M]_w x <= d_w`.
    pub fn rhs(&self, entry: ActiveRow) -> f64 {
        entry.side.sign() * self.bound(entry)
    }

    /// Hard equality rows carry sign-free multipliers and never leave the
    /// working set.
    pub fn is_hard_equality(&self, row: usize) -> bool {
        !self.slack.is_soft(row) && self.lower[row] == self.upper[row]
    }

    /// Slack assigned to `row` (zero for hard rows).
    fn row_slack(&self, row: usize, eps: &[f64]) -> f64 {
        if self.slack.is_soft(row) {
            eps[row - self.slack.slack_start]
        } else {
            0.0
        }
    }

    /// Violations `(lower side, upper side)` of row `r` at `(z, eps)`;
    /// `None` for an absent side.
    fn row_violation(&self, r: usize, z: &[f64], eps: &[f64]) -> (Option<f64>, Option<f64>) {
        let az = dot(self.a.row(r), z);
        let e = self.row_slack(r, eps);
        let lo = self.lower[r].is_finite().then(|| self.lower[r] - az - e);
        let up = self.upper[r].is_finite().then(|| az - e - self.upper[r]);
        (lo, up)
    }
}

/// Primal-dual point for a fixed working set.
#[derive(Debug, Clone, PartialEq)]
pub struct KktPoint {
    pub z: Vec<f64>,
    /// Scaled slack `W eps / rho` of the current-level rows.
    pub eps_tilde: Vec<f64>,
    pub eps: Vec<f64>,
    /// Multipliers in working-set order.
    pub lambda: Vec<f64>,
}

/// Result of [`solve_level`].
#[derive(Debug, Clone, PartialEq)]
pub struct LevelSolution {
    pub z: DVector<f64>,
    /// Slack of each current-level row (`rho^2 / w_k^2` times its multiplier).
    pub eps: DVector<f64>,
    /// Multipliers in working-set order.
    pub lambda: Vec<f64>,
    pub working_set: WorkingSet,
    pub iterations: usize,
    /// Relative primal tolerance in force at termination.
    pub primal_rel_tol: f64,
}

/// Primal point `x = -M_W^T lambda`, split into `(z, eps_tilde, eps)`.
fn primal_from_dual(p: &LevelProblem, order: &[ActiveRow], lambda: &[f64]) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let mut z = vec![0.0; p.dim()];
    let m_i = p.soft_rows();
    let mut eps_tilde = vec![0.0; m_i];
    let mut eps = vec![0.0; m_i];
    for (e, &lam) in order.iter().zip(lambda) {
        let coef = -e.side.sign() * lam;
        for (zi, ai) in z.iter_mut().zip(p.a.row(e.row)) {
            *zi += coef * ai;
        }
        if p.slack.is_soft(e.row) {
            let k = e.row - p.slack.slack_start;
            eps_tilde[k] += p.slack.slack_coefficient(e.row) * lam;
            eps[k] += p.slack.diagonal_correction(e.row) * lam;
        }
    }
    (z, eps_tilde, eps)
}

/// Iterative refinement on `x = (z, eps_tilde)`: projects `x` back onto
/// `M_W x = d_W` until the correction stops shrinking. Returns the size of
/// the first correction, an estimate of the error in the unrefined `x`.
///
/// The multipliers grow like `1 / rho^2` while `z` stays O(1), so forming
/// `z = -M^T lambda` loses digits to cancellation. The correction is small
/// and is accumulated without that loss. It is not folded into the
/// multipliers: for nearly dependent working sets they are ill-determined
/// along the near-null direction, and the correction can push them far
/// from dual feasibility without changing `x`.
fn refine_primal(
    p: &LevelProblem,
    f: &LdlFactors,
    z: &mut [f64],
    eps_tilde: &mut [f64],
    eps: &mut [f64],
) -> Result<f64, SolveError> {
    const MAX_STEPS: usize = 8;
    let mut first = 0.0;
    if f.is_empty() {
        return Ok(first);
    }
    let spec = &p.slack;
    let mut prev = f64::INFINITY;
    for step in 0..MAX_STEPS {
        let resid: Vec<f64> = f
            .order()
            .iter()
            .map(|&e| {
                let mut v = e.side.sign() * dot(p.a.row(e.row), z) - p.rhs(e);
                if spec.is_soft(e.row) {
                    v -= spec.slack_coefficient(e.row) * eps_tilde[e.row - spec.slack_start];
                }
                v
            })
            .collect();
        let delta = f.solve(&resid)?;
        let z_before = z.to_vec();
        let mut moved = 0.0;
        for (&e, &d) in f.order().iter().zip(&delta) {
            let coef = e.side.sign() * d;
            for (zi, ai) in z.iter_mut().zip(p.a.row(e.row)) {
                *zi -= coef * ai;
            }
            if spec.is_soft(e.row) {
                let k = e.row - spec.slack_start;
                let shift = spec.slack_coefficient(e.row) * d;
                eps_tilde[k] += shift;
                moved += shift * shift;
            }
        }
        moved += z.iter().zip(&z_before).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
        let size = moved.sqrt();
        if step == 0 {
            first = size;
        }
        let scale = 1.0 + dot(z, z).sqrt() + dot(eps_tilde, eps_tilde).sqrt();
        if size <= 1e-14 * scale || size > 0.5 * prev {
            break;
        }
        prev = size;
    }
    for (k, (et, ep)) in eps_tilde.iter().zip(eps.iter_mut()).enumerate() {
        *ep = spec.slack_coefficient(spec.slack_start + k) * et;
    }
    Ok(first)
}

/// Solves the equality-constrained subproblem for the working set held in
/// `f` (whose order must match `w`).
pub fn kkt_point(p: &LevelProblem, f: &LdlFactors, w: &WorkingSet) -> Result<KktPoint, SolveError> {
    if f.order() != w.entries() {
        return Err(SolveError::DimensionMismatch { expected: f.len(), found: w.len() });
    }
    let rhs: Vec<f64> = f.order().iter().map(|&e| -p.rhs(e)).collect();
    let lambda = f.solve(&rhs)?;
    let (mut z, mut eps_tilde, mut eps) = primal_from_dual(p, f.order(), &lambda);
    refine_primal(p, f, &mut z, &mut eps_tilde, &mut eps)?;
    Ok(KktPoint { z, eps_tilde, eps, lambda })
}

/// Most violated constraint at `(z, eps)`, measured relative to the norm of
/// the corresponding row of `M`. Ties go to the lowest row index, then to the
/// lower side. Returns `None` when every row is satisfied within tolerance.
pub fn select_violated(p: &LevelProblem, z: &[f64], eps: &[f64], settings: &SolverSettings) -> Option<ActiveRow> {
    select_violated_where(p, z, eps, settings, |_| true)
}

fn select_violated_where(
    p: &LevelProblem,
    z: &[f64],
    eps: &[f64],
    settings: &SolverSettings,
    mut eligible: impl FnMut(usize) -> bool,
) -> Option<ActiveRow> {
    let mut best: Option<(f64, ActiveRow)> = None;
    for r in 0..p.nrows() {
        if !eligible(r) {
            continue;
        }
        let (lo, up) = p.row_violation(r, z, eps);
        for (viol, side) in [(lo, Side::Lower), (up, Side::Upper)] {
            let Some(v) = viol else { continue };
            let entry = ActiveRow::new(r, side);
            if v <= settings.primal_tol(p.bound(entry)) {
                continue;
            }
            let norm = p.m_row_norms[r];
            let scaled = if norm > 0.0 { v / norm } else { f64::INFINITY };
            if best.is_none_or(|(b, _)| scaled > b) {
                best = Some((scaled, entry));
            }
        }
    }
    best.map(|(_, e)| e)
}

/// Largest violation over all rows, relative to `1 + |bound|`.
fn max_rel_violation(p: &LevelProblem, z: &[f64], eps: &[f64]) -> f64 {
    let mut worst = 0.0_f64;
    for r in 0..p.nrows() {
        let (lo, up) = p.row_violation(r, z, eps);
        if let Some(v) = lo {
            worst = worst.max(v / (1.0 + p.lower[r].abs()));
        }
        if let Some(v) = up {
            worst = worst.max(v / (1.0 + p.upper[r].abs()));
        }
    }
    worst
}

fn removable(p: &LevelProblem, e: ActiveRow) -> bool {
    !p.is_hard_equality(e.row)
}

/// Solves one level starting from the working set `warm`.
///
/// Warm entries that reference rows outside the problem, sides with an
/// infinite bound, or rows dependent on earlier warm entries are dropped.
pub fn solve_level(p: &LevelProblem, warm: &WorkingSet, settings: &SolverSettings) -> Result<LevelSolution, SolveError> {
    #[cfg(debug_assertions)]
    let base_tol = settings.primal_rel_tol;
    let mut tol = *settings;
    let settings = &mut tol;
    let max_iter = settings.max_iter.unwrap_or(100 * (p.dim() + p.nrows()).max(1));
    let mut f = LdlFactors::new();
    for &e in warm.entries() {
        if e.row >= p.nrows() || !p.bound(e).is_finite() || f.position(e.row).is_some() {
            continue;
        }
        // Dependent warm rows are skipped rather than reported.
        f.add_row(&p.a, e, &p.slack)?;
    }
    let mut lambda = vec![0.0; f.len()];
    #[cfg(debug_assertions)]
    let mut last_dual_obj = 0.0_f64;
    #[cfg(debug_assertions)]
    let mut last_solve_error = 0.0_f64;

    let mut just_added: Option<ActiveRow> = None;
    // Working sets met at stationary points. Revisiting one means the
    // iteration is cycling on roundoff-level violations.
    let mut entry_violation = f64::INFINITY;
    let mut visited: HashSet<Vec<ActiveRow>> = HashSet::new();
    // Least violating stationary point seen since the tolerance reached its
    // ceiling, returned if the iteration cycles there as well.
    let mut best: Option<LevelSolution> = None;
    // Whether `f` was factored from scratch since the last update.
    let mut fresh = true;
    let mut iterations = 0;
    loop {
        iterations += 1;
        if iterations > max_iter {
            return Err(SolveError::IterationLimit(max_iter));
        }
        let rhs: Vec<f64> = f.order().iter().map(|&e| -p.rhs(e)).collect();
        let target = f.solve(&rhs)?;

        let infeasible_dual = f
            .order()
            .iter()
            .zip(&target)
            .any(|(&e, &t)| removable(p, e) && t < -settings.dual_tol);
        // A freshly added violated row always has a positive stationary
        // multiplier. A negative one means its pivot was lost to roundoff,
        // so the row is handled as dependent instead.
        let last = f.len().wrapping_sub(1);
        if let Some(entry) = just_added.take() {
            if infeasible_dual && f.order().get(last) == Some(&entry) && target[last] < -settings.dual_tol {
                let l = f.l_row(last).to_vec();
                let mut entering = lambda.pop().unwrap_or(0.0);
                f.remove_row(last)?;
                fresh = false;
                let added = shift_onto_dependent(p, &mut f, &mut lambda, &l, &mut entering)
                    .and_then(|()| add_constraint(p, &mut f, &mut lambda, entry, entering));
                if !absorb_inconsistency(added, settings, entry_violation)? {
                    just_added = Some(entry);
                }
                #[cfg(debug_assertions)]
                {
                    last_dual_obj = 0.0;
                }
                continue;
            }
        }
        if infeasible_dual {
            // Move toward the stationary point until the first multiplier
            // hits zero, then drop that constraint.
            let mut step = 1.0;
            let mut block = None;
            for (k, (&e, (&lam, &t))) in f.order().iter().zip(lambda.iter().zip(&target)).enumerate() {
                if !removable(p, e) || t >= 0.0 {
                    continue;
                }
                // Refinement may leave a multiplier marginally negative.
                let lam = lam.max(0.0);
                let ratio = lam / (lam - t);
                if block.is_none() || ratio < step {
                    step = ratio;
                    block = Some(k);
                }
            }
            let block = block.expect("a negative target multiplier always blocks");
            for (lam, t) in lambda.iter_mut().zip(&target) {
                *lam += step * (t - *lam);
            }
            f.remove_row(block)?;
            lambda.remove(block);
            fresh = false;
            continue;
        }

        lambda = target;
        let (mut z, mut eps_tilde, mut eps) = primal_from_dual(p, f.order(), &lambda);
        let solve_error = refine_primal(p, &f, &mut z, &mut eps_tilde, &mut eps)?;
        // Rank-one updates accumulate error on ill-conditioned working sets.
        // When the stationary point has drifted visibly, start over from a
        // fresh factorization; rows it finds dependent leave the working set.
        let x_scale = 1.0 + dot(&z, &z).sqrt() + dot(&eps_tilde, &eps_tilde).sqrt();
        if !fresh && solve_error > REFACTOR_REL_TOL * x_scale {
            let (g, skipped) = LdlFactors::refactor_skipping(f.order(), &p.a, &p.slack)?;
            for &k in skipped.iter().rev() {
                lambda.remove(k);
            }
            f = g;
            fresh = true;
            // The drifted point is no baseline for the objective.
            #[cfg(debug_assertions)]
            {
                last_dual_obj = 0.0;
            }
            continue;
        }

        #[cfg(debug_assertions)]
        {
            // At a stationary point the dual objective equals 1/2 ||x||^2.
            // Both values carry an error of about ||x|| times the error of
            // the unrefined x, which the first refinement step measures.
            // Once the tolerance has been raised roundoff is known to
            // dominate and the check is off.
            let obj = 0.5 * (dot(&z, &z) + dot(&eps_tilde, &eps_tilde));
            let x_norm = (2.0 * obj).sqrt();
            let allowance = 1e-9 * (1.0 + last_dual_obj) + 2.0 * x_norm * (solve_error + last_solve_error);
            debug_assert!(
                settings.primal_rel_tol > base_tol || obj >= last_dual_obj - allowance,
                "dual objective decreased: {last_dual_obj} -> {obj}"
            );
            last_solve_error = solve_error;
            last_dual_obj = obj;
        }
        #[cfg(not(debug_assertions))]
        let _ = (&eps_tilde, solve_error);

        let mut key = f.order().to_vec();
        key.sort_unstable();
        let repeated = !visited.insert(key);
        if settings.primal_rel_tol >= settings.max_primal_rel_tol {
            if repeated {
                // Cycling far from feasibility is not a roundoff effect.
                match best.take() {
                    Some(sol) if sol.primal_rel_tol <= settings.max_primal_rel_tol => {
                        return Ok(LevelSolution { iterations, ..sol });
                    }
                    Some(_) => return Err(SolveError::IterationLimit(iterations)),
                    None => {}
                }
            }
            let viol = max_rel_violation(p, &z, &eps);
            if best.as_ref().is_none_or(|b| viol < b.primal_rel_tol) {
                best = Some(LevelSolution {
                    z: DVector::from_column_slice(&z),
                    eps: DVector::from_column_slice(&eps),
                    lambda: lambda.clone(),
                    working_set: WorkingSet::from_entries(f.order().iter().copied()),
                    iterations,
                    primal_rel_tol: viol.max(settings.primal_rel_tol),
                });
            }
        } else if repeated {
            settings.primal_rel_tol = (settings.primal_rel_tol * 10.0).min(settings.max_primal_rel_tol);
            visited.clear();
        }

        let in_w: Vec<usize> = f.order().iter().map(|e| e.row).collect();
        let Some(candidate) = select_violated_where(p, &z, &eps, settings, |r| !in_w.contains(&r)) else {
            let working_set = WorkingSet::from_entries(f.order().iter().copied());
            return Ok(LevelSolution {
                z: DVector::from_vec(z),
                eps: DVector::from_vec(eps),
                lambda,
                working_set,
                iterations,
                primal_rel_tol: settings.primal_rel_tol,
            });
        };

        let (lo, up) = p.row_violation(candidate.row, &z, &eps);
        let viol = match candidate.side {
            Side::Lower => lo,
            Side::Upper => up,
        };
        entry_violation = viol.unwrap_or(f64::INFINITY) / (1.0 + p.bound(candidate).abs());
        let added = add_constraint(p, &mut f, &mut lambda, candidate, 0.0);
        fresh = false;
        if absorb_inconsistency(added, settings, entry_violation)? {
            #[cfg(debug_assertions)]
            {
                last_dual_obj = 0.0;
            }
        } else {
            just_added = Some(candidate);
        }
    }
}

/// Turns an inconsistency whose relative size is within the tolerance
/// ceiling into a tolerance increase. Returns whether that happened, in
/// which case the entering row was not added.
fn absorb_inconsistency(
    added: Result<(), SolveError>,
    settings: &mut SolverSettings,
    rel_violation: f64,
) -> Result<bool, SolveError> {
    match added {
        Ok(()) => Ok(false),
        Err(SolveError::InfeasibleHardLevel) if rel_violation <= settings.max_primal_rel_tol => {
            while settings.primal_rel_tol < rel_violation {
                settings.primal_rel_tol *= 10.0;
            }
            settings.primal_rel_tol = settings.primal_rel_tol.min(settings.max_primal_rel_tol);
            Ok(true)
        }
        Err(e) => Err(e),
    }
}

/// Appends `candidate` to the working set with multiplier `entering`.
///
/// If it is dependent on the working set, weight is shifted from the working
/// set onto it (the primal point does not move) until some multiplier hits
/// zero; that constraint is dropped and the add retried.
fn add_constraint(
    p: &LevelProblem,
    f: &mut LdlFactors,
    lambda: &mut Vec<f64>,
    candidate: ActiveRow,
    mut entering: f64,
) -> Result<(), SolveError> {
    loop {
        match f.add_row(&p.a, candidate, &p.slack)? {
            AddOutcome::Added { .. } => {
                lambda.push(entering);
                return Ok(());
            }
            AddOutcome::Dependent { l, .. } => shift_onto_dependent(p, f, lambda, &l, &mut entering)?,
        }
    }
}

/// Blocking position and step length along the null direction `(-c, 1)` of
/// `M^T` for a row with `[M]_row = sum_w c_w [M]_w`. `None` means nothing
/// blocks, so the hard constraints are inconsistent.
fn plan_shift(p: &LevelProblem, f: &LdlFactors, lambda: &[f64], c: &[f64]) -> Option<(usize, f64)> {
    let mut best: Option<(usize, f64)> = None;
    for (k, (&e, &ck)) in f.order().iter().zip(c).enumerate() {
        if !removable(p, e) || ck <= 0.0 {
            continue;
        }
        let ratio = lambda[k].max(0.0) / ck;
        if best.is_none_or(|(_, s)| ratio < s) {
            best = Some((k, ratio));
        }
    }
    best
}

fn apply_shift(
    f: &mut LdlFactors,
    lambda: &mut Vec<f64>,
    c: &[f64],
    block: usize,
    step: f64,
    entering: &mut f64,
) -> Result<(), SolveError> {
    for (lam, ck) in lambda.iter_mut().zip(c) {
        *lam -= step * ck;
    }
    *entering += step;
    f.remove_row(block)?;
    lambda.remove(block);
    Ok(())
}

/// Shifts onto a dependent row and drops the blocker.
fn shift_onto_dependent(
    p: &LevelProblem,
    f: &mut LdlFactors,
    lambda: &mut Vec<f64>,
    l: &[f64],
    entering: &mut f64,
) -> Result<(), SolveError> {
    let c = f.dependency_coefficients(l);
    let (block, step) = plan_shift(p, f, lambda, &c).ok_or(SolveError::InfeasibleHardLevel)?;
    apply_shift(f, lambda, &c, block, step, entering)
}
