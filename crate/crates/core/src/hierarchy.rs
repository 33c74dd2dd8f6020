//! Sequential solve over the levels of a [`Hierarchy`], producing the
//! prioritized intersection
//!
//! ```text
//!     Z_1 (+) Z_2 (+) ... (+) Z_p = Z_1 ∩ { lower_i - eps*_i <= A_i z <= upper_i + eps*_i, i >= 2 }
//! ```
//!
//! Each level is solved with [`solve_level`], warm-started from the previous
//! level's final working set. After a level is solved its bounds are frozen
//! at the perturbed values and its rows become hard for all later levels.

use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};

use crate::error::SolveError;
use crate::factorization::{dot, RowMatrix};
use crate::model::{Hierarchy, HierarchyLevel, Polyhedron};
use crate::solver::{solve_level, LevelProblem, SolverSettings, WorkingSet};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HierarchyOptions {
    pub settings: SolverSettings,
    /// Seed each level with the previous level's working set. When false
    /// every level starts from an empty working set.
    pub warm_start: bool,
}

impl Default for HierarchyOptions {
    fn default() -> Self {
        Self { settings: SolverSettings::default(), warm_start: true }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LevelStats {
    /// Zero-based level index.
    pub level: usize,
    pub iterations: usize,
    pub wall_time: Duration,
    pub working_set_size: usize,
    /// Perturbation before clamping at zero.
    pub raw_eps: DVector<f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SolveStats {
    pub levels: Vec<LevelStats>,
    /// Iterations of the final objective stage, when one was run.
    pub objective_iterations: Option<usize>,
}

impl SolveStats {
    pub fn total_iterations(&self) -> usize {
        self.levels.iter().map(|l| l.iterations).sum()
    }

    pub fn mean_iterations(&self) -> f64 {
        if self.levels.is_empty() {
            0.0
        } else {
            self.total_iterations() as f64 / self.levels.len() as f64
        }
    }

    pub fn total_time(&self) -> Duration {
        self.levels.iter().map(|l| l.wall_time).sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HierarchySolution {
    /// Regularized least-norm point of the prioritized intersection.
    pub z_star: DVector<f64>,
    /// Perturbations of levels `2..=p` (index 0 is level 2). Level 1 is hard
    /// and implicitly carries a zero perturbation.
    pub eps_star: Vec<DVector<f64>>,
    pub working_set: WorkingSet,
    pub stats: SolveStats,
}

impl HierarchySolution {
    /// Perturbation of the zero-based `level`; zeros for the hard level.
    pub fn eps_for_level(&self, h: &Hierarchy, level: usize) -> DVector<f64> {
        if level == 0 {
            DVector::zeros(h.levels[0].nrows())
        } else {
            self.eps_star[level - 1].clone()
        }
    }

    /// Every level with its bounds relaxed by the returned perturbation.
    pub fn perturbed_levels(&self, h: &Hierarchy) -> Result<Vec<Polyhedron>, SolveError> {
        h.levels
            .iter()
            .enumerate()
            .map(|(i, l)| {
                l.poly
                    .perturb(&self.eps_for_level(h, i))
                    .map_err(|_| SolveError::DimensionMismatch { expected: l.nrows(), found: 0 })
            })
            .collect()
    }

    /// The prioritized intersection as a single polyhedron (all perturbed
    /// levels stacked).
    pub fn intersection(&self, h: &Hierarchy) -> Result<Polyhedron, SolveError> {
        let levels = self.perturbed_levels(h)?;
        let mut acc = Polyhedron::unconstrained(h.dim());
        for p in &levels {
            acc = acc
                .intersect(p)
                .map_err(|_| SolveError::DimensionMismatch { expected: h.dim(), found: p.dim() })?;
        }
        Ok(acc)
    }
}

/// Rows of all levels so far, each scaled to unit norm. The scaling is a
/// diagonal preconditioner for the working-set Gram matrix; rows of an MPC
/// hierarchy, for instance, span several orders of magnitude in norm.
struct Stacked {
    a: RowMatrix,
    lower: Vec<f64>,
    upper: Vec<f64>,
    /// Original norm of every row (1 for zero rows).
    norms: Vec<f64>,
}

impl Stacked {
    fn empty(n: usize) -> Self {
        Self { a: RowMatrix::zeros(0, n), lower: Vec::new(), upper: Vec::new(), norms: Vec::new() }
    }

    /// Appends the level's rows and returns its weights rescaled so that the
    /// weighted perturbations are unchanged.
    fn push_level(&mut self, level: &HierarchyLevel) -> Vec<f64> {
        let mut a = level.poly.a().clone();
        let mut weights = Vec::with_capacity(a.nrows());
        for r in 0..a.nrows() {
            let norm = a.row(r).norm();
            let s = if norm > 0.0 && norm.is_finite() { norm } else { 1.0 };
            a.row_mut(r).unscale_mut(s);
            self.lower.push(level.poly.lower()[r] / s);
            self.upper.push(level.poly.upper()[r] / s);
            self.norms.push(s);
            weights.push(level.weights[r] * s);
        }
        self.a.append(&RowMatrix::from_dmatrix(&a));
        weights
    }
}

/// Prioritized intersection with default options.
pub fn prioritized_intersection(h: &Hierarchy, warm: Option<&WorkingSet>) -> Result<HierarchySolution, SolveError> {
    prioritized_intersection_with(h, warm, &HierarchyOptions::default())
}

pub fn prioritized_intersection_with(
    h: &Hierarchy,
    warm: Option<&WorkingSet>,
    opts: &HierarchyOptions,
) -> Result<HierarchySolution, SolveError> {
    let diags = h.blocking_diagnostics();
    if !diags.is_empty() {
        return Err(SolveError::InvalidHierarchy(diags));
    }
    let mut stacked = Stacked::empty(h.dim());
    stacked.push_level(&h.levels[0]);
    let mut working = warm.cloned().unwrap_or_default();
    let mut stats = SolveStats::default();

    if h.num_levels() == 1 {
        let problem = LevelProblem::hard(stacked.a, stacked.lower, stacked.upper)?;
        let start = Instant::now();
        let sol = solve_level(&problem, &working, &opts.settings)?;
        stats.levels.push(LevelStats {
            level: 0,
            iterations: sol.iterations,
            wall_time: start.elapsed(),
            working_set_size: sol.working_set.len(),
            raw_eps: DVector::zeros(0),
        });
        return Ok(HierarchySolution { z_star: sol.z, eps_star: Vec::new(), working_set: sol.working_set, stats });
    }

    let mut eps_star = Vec::with_capacity(h.num_levels() - 1);
    let mut z_star = DVector::zeros(h.dim());
    for (i, level) in h.levels.iter().enumerate().skip(1) {
        let start_row = stacked.a.nrows();
        let weights = stacked.push_level(level);
        let problem =
            LevelProblem::new(stacked.a.clone(), stacked.lower.clone(), stacked.upper.clone(), &weights, h.rho)?;
        let seed = if opts.warm_start { working } else { WorkingSet::new() };
        let start = Instant::now();
        let sol = solve_level(&problem, &seed, &opts.settings)?;
        let wall_time = start.elapsed();

        // At the optimum each slack equals the positive part of its row's
        // residual. Reading it off z* keeps the frozen bounds consistent with
        // z* even though z* carries cancellation error of order 1/rho^2.
        let residual = level.poly.residual(&sol.z).map_err(|_| SolveError::DimensionMismatch {
            expected: h.dim(),
            found: sol.z.len(),
        })?;
        let eps = residual.0.zip_map(&residual.1, |lo, up| lo.max(up).max(0.0));
        // Earlier rows are only met within the primal tolerance. Widening
        // them to pass through z* keeps every later hard set nonempty;
        // otherwise the gap is amplified by the degenerate frozen geometry.
        for r in 0..start_row {
            let az = dot(stacked.a.row(r), sol.z.as_slice());
            stacked.lower[r] = stacked.lower[r].min(az);
            stacked.upper[r] = stacked.upper[r].max(az);
        }
        for (k, &e) in eps.iter().enumerate() {
            let r = start_row + k;
            stacked.lower[r] -= e / stacked.norms[r];
            stacked.upper[r] += e / stacked.norms[r];
        }
        stats.levels.push(LevelStats {
            level: i,
            iterations: sol.iterations,
            wall_time,
            working_set_size: sol.working_set.len(),
            raw_eps: sol.eps.component_mul(&DVector::from_column_slice(&stacked.norms[start_row..])),
        });
        eps_star.push(eps);
        z_star = sol.z;
        working = sol.working_set;
    }
    Ok(HierarchySolution { z_star, eps_star, working_set: working, stats })
}

/// Computes the prioritized intersection, then minimizes
/// `1/2 u^T H u + f^T u` over it.
///
/// With `H = L L^T` the substitution `y = L^T u + L^{-1} f` turns the
/// objective into `1/2 ||y||^2 + const`, so the second stage is another
/// least-distance problem over the transformed (all hard) constraints.
pub fn solve_with_objective(
    h: &Hierarchy,
    hess: &DMatrix<f64>,
    lin: &DVector<f64>,
    warm: Option<&WorkingSet>,
) -> Result<(DVector<f64>, HierarchySolution), SolveError> {
    solve_with_objective_with(h, hess, lin, warm, &HierarchyOptions::default())
}

pub fn solve_with_objective_with(
    h: &Hierarchy,
    hess: &DMatrix<f64>,
    lin: &DVector<f64>,
    warm: Option<&WorkingSet>,
    opts: &HierarchyOptions,
) -> Result<(DVector<f64>, HierarchySolution), SolveError> {
    let n = h.dim();
    if hess.nrows() != n || hess.ncols() != n {
        return Err(SolveError::DimensionMismatch { expected: n, found: hess.nrows() });
    }
    if lin.len() != n {
        return Err(SolveError::DimensionMismatch { expected: n, found: lin.len() });
    }
    let scale = hess.amax().max(f64::MIN_POSITIVE);
    if (hess - hess.transpose()).amax() > 1e-12 * scale {
        return Err(SolveError::NotPositiveDefinite);
    }
    let chol = hess.clone().cholesky().ok_or(SolveError::NotPositiveDefinite)?;
    let l = chol.l();

    let mut sol = prioritized_intersection_with(h, warm, opts)?;
    let set = sol.intersection(h)?;
    // As during the level solves, rows met only within tolerance are
    // widened to pass through z*, which keeps the set nonempty.
    let az = set.a() * &sol.z_star;

    // A' = A L^{-T}, shift = A H^{-1} f.
    let a_t = l
        .solve_lower_triangular(&set.a().transpose())
        .ok_or(SolveError::NotPositiveDefinite)?;
    let a_new = a_t.transpose();
    let shift = set.a() * chol.solve(lin);
    let mut a_new = a_new;
    let mut lower = Vec::with_capacity(az.len());
    let mut upper = Vec::with_capacity(az.len());
    for r in 0..az.len() {
        let norm = a_new.row(r).norm();
        let s = if norm > 0.0 && norm.is_finite() { norm } else { 1.0 };
        a_new.row_mut(r).unscale_mut(s);
        lower.push((set.lower()[r].min(az[r]) + shift[r]) / s);
        upper.push((set.upper()[r].max(az[r]) + shift[r]) / s);
    }
    let problem = LevelProblem::hard(RowMatrix::from_dmatrix(&a_new), lower, upper)?;
    let seed = if opts.warm_start { sol.working_set.clone() } else { WorkingSet::new() };
    let stage = solve_level(&problem, &seed, &opts.settings)?;

    let l_inv_f = l.solve_lower_triangular(lin).ok_or(SolveError::NotPositiveDefinite)?;
    let w = &stage.z - l_inv_f;
    let u = l.transpose().solve_upper_triangular(&w).ok_or(SolveError::NotPositiveDefinite)?;
    sol.stats.objective_iterations = Some(stage.iterations);
    Ok((u, sol))
}

/// Two-set prioritized intersection `hard (+) soft`: returns `soft` relaxed
/// by the minimal perturbation, together with that perturbation.
pub fn pcap_pair(hard: &Polyhedron, soft: &HierarchyLevel, rho: f64) -> Result<(Polyhedron, DVector<f64>), SolveError> {
    let h = Hierarchy::new(vec![HierarchyLevel::new(hard.clone()), soft.clone()], rho);
    let sol = prioritized_intersection(&h, None)?;
    let eps = sol.eps_star[0].clone();
    let relaxed = soft
        .poly
        .perturb(&eps)
        .map_err(|_| SolveError::DimensionMismatch { expected: soft.nrows(), found: eps.len() })?;
    Ok((relaxed, eps))
}

#[cfg(test)]
mod tests {
    use super::*;

    const NEG: f64 = f64::NEG_INFINITY;
    const POS: f64 = f64::INFINITY;

    fn level1d(lo: f64, hi: f64) -> HierarchyLevel {
        HierarchyLevel::new(Polyhedron::from_rows(1, &[(lo, &[1.0], hi)]).unwrap())
    }

    #[test]
    fn compatible_sets_give_tiny_perturbation() {
        let h = Hierarchy::new(vec![level1d(NEG, 1.0), level1d(0.0, POS)], 1e-3);
        let s = prioritized_intersection(&h, None).unwrap();
        assert!(s.z_star[0].abs() < 1e-12);
        assert!(s.eps_star[0][0] <= 1e-6);
    }

    #[test]
    fn one_dimensional_chain() {
        let h = Hierarchy::new(vec![level1d(NEG, 0.0), level1d(1.0, POS), level1d(NEG, -1.0)], 1e-3);
        let s = prioritized_intersection(&h, None).unwrap();
        assert!((s.eps_star[0][0] - 1.0).abs() < 1e-4);
        assert!((s.eps_star[1][0] - 1.0).abs() < 1e-4);
        assert!(s.z_star[0].abs() < 1e-4);
        assert_eq!(s.stats.levels.len(), 2);
    }

    #[test]
    fn single_level_is_least_norm_point() {
        let h = Hierarchy::new(vec![level1d(2.0, 3.0)], 1e-3);
        let s = prioritized_intersection(&h, None).unwrap();
        assert!((s.z_star[0] - 2.0).abs() < 1e-12);
        assert!(s.eps_star.is_empty());
    }

    #[test]
    fn empty_first_level_is_infeasible() {
        let empty = HierarchyLevel::new(Polyhedron::from_rows(1, &[(1.0, &[0.0], 1.0)]).unwrap());
        let h = Hierarchy::new(vec![empty, level1d(0.0, 1.0)], 1e-3);
        assert_eq!(prioritized_intersection(&h, None), Err(SolveError::InfeasibleHardLevel));
    }

    #[test]
    fn invalid_hierarchy_rejected() {
        let mut l = level1d(0.0, 1.0);
        l.weights[0] = -1.0;
        let h = Hierarchy::new(vec![level1d(NEG, 0.0), l], 1e-3);
        assert!(matches!(prioritized_intersection(&h, None), Err(SolveError::InvalidHierarchy(_))));
    }

    #[test]
    fn objective_stage_examples() {
        let free = Hierarchy::new(vec![HierarchyLevel::new(Polyhedron::unconstrained(1))], 1e-3);
        let (u, _) = solve_with_objective(&free, &DMatrix::identity(1, 1), &DVector::zeros(1), None).unwrap();
        assert_eq!(u[0], 0.0);

        let h = Hierarchy::new(vec![level1d(NEG, 0.5)], 1e-3);
        let (u, _) =
            solve_with_objective(&h, &DMatrix::identity(1, 1), &DVector::from_element(1, -2.0), None).unwrap();
        assert!((u[0] - 0.5).abs() < 1e-12);

        let h = Hierarchy::new(
            vec![HierarchyLevel::new(Polyhedron::from_rows(2, &[(1.0, &[1.0, 1.0], POS)]).unwrap())],
            1e-3,
        );
        let hess = DMatrix::from_diagonal(&DVector::from_column_slice(&[1.0, 4.0]));
        let (u, _) = solve_with_objective(&h, &hess, &DVector::zeros(2), None).unwrap();
        assert!((u[0] - 0.8).abs() < 1e-12 && (u[1] - 0.2).abs() < 1e-12);
    }

    #[test]
    fn objective_rejects_indefinite_hessian() {
        let h = Hierarchy::new(vec![level1d(NEG, 0.5)], 1e-3);
        let bad = DMatrix::from_element(1, 1, -1.0);
        assert_eq!(
            solve_with_objective(&h, &bad, &DVector::zeros(1), None).map(|_| ()),
            Err(SolveError::NotPositiveDefinite)
        );
    }

    #[test]
    fn pcap_pair_relaxes_soft_set() {
        let hard = Polyhedron::from_rows(1, &[(NEG, &[1.0], 0.0)]).unwrap();
        let (relaxed, eps) = pcap_pair(&hard, &level1d(1.0, POS), 1e-3).unwrap();
        assert!((eps[0] - 1.0).abs() < 1e-5);
        assert!(relaxed.lower()[0].abs() < 1e-5);
    }
}
