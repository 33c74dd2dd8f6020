//! Slow reference solvers used to validate [`crate::solver`] and
//! [`crate::hierarchy`] on tiny instances.
//!
//! Both oracles avoid the machinery they check: [`enumerate_level`] works in
//! the original `(z, eps)` variables with an explicit KKT matrix and dense
//! LU, never forming `M` or touching the incremental factorization, and
//! [`grid_pcap`] minimizes the violation functions directly by exhaustive
//! search.

use nalgebra::{DMatrix, DVector};

use crate::error::SolveError;
use crate::factorization::{dot, ActiveRow};
use crate::hierarchy::HierarchySolution;
use crate::model::{Hierarchy, Side};
use crate::solver::{LevelProblem, LevelSolution, WorkingSet};

/// Largest `n_z + m_i` accepted by [`enumerate_level`].
pub const MAX_ENUMERATION_SIZE: usize = 12;

const PRIMAL_REL_TOL: f64 = 1e-8;
const DUAL_REL_TOL: f64 = 1e-9;
const RANK_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy)]
struct Candidate {
    entry: ActiveRow,
    /// False for rows whose multiplier is sign-free: hard equalities, and
    /// soft equalities whose side is read off the sign of their slack.
    removable: bool,
}

/// Candidate active constraints of the problem, one list per row.
fn row_options(p: &LevelProblem) -> Vec<Vec<Candidate>> {
    (0..p.nrows())
        .map(|r| {
            if p.lower()[r] == p.upper()[r] {
                return vec![Candidate { entry: ActiveRow::upper(r), removable: false }];
            }
            [Side::Lower, Side::Upper]
                .into_iter()
                .map(|s| ActiveRow::new(r, s))
                .filter(|&e| p.bound(e).is_finite())
                .map(|entry| Candidate { entry, removable: true })
                .collect()
        })
        .collect()
}

struct EqSolution {
    z: Vec<f64>,
    eps: Vec<f64>,
    /// Multipliers of the hard rows, then of the soft rows, in set order.
    mult: Vec<f64>,
    objective: f64,
}

/// Minimizes `zw ||z||^2 + sum_k w_k^2 eps_k^2` with the chosen hard rows held
/// at their bounds and, for each chosen soft row, `eps_k` equal to the signed
/// distance past its bound. Unchosen soft rows have `eps_k = 0`.
///
/// Eliminating the slacks leaves a KKT system in `(z, nu)` only.
fn solve_equality(
    p: &LevelProblem,
    weights_sq: &[f64],
    z_weight: f64,
    hard: &[Candidate],
    soft: &[Candidate],
) -> Option<EqSolution> {
    let n = p.dim();
    let h = hard.len();
    let start = p.slack().slack_start;
    let mut kkt = DMatrix::<f64>::zeros(n + h, n + h);
    let mut rhs = DVector::<f64>::zeros(n + h);
    for i in 0..n {
        kkt[(i, i)] = 2.0 * z_weight;
    }
    for c in soft {
        let a = p.a().row(c.entry.row);
        let b = p.bound(c.entry);
        let w2 = weights_sq[c.entry.row - start];
        for i in 0..n {
            rhs[i] += 2.0 * w2 * b * a[i];
            for j in 0..n {
                kkt[(i, j)] += 2.0 * w2 * a[i] * a[j];
            }
        }
    }
    for (k, c) in hard.iter().enumerate() {
        let s = c.entry.side.sign();
        for (col, &v) in p.a().row(c.entry.row).iter().enumerate() {
            kkt[(n + k, col)] = s * v;
            kkt[(col, n + k)] = s * v;
        }
        rhs[n + k] = s * p.bound(c.entry);
    }
    let sol = kkt.lu().solve(&rhs)?;
    let z: Vec<f64> = sol.rows(0, n).iter().copied().collect();
    let mut eps = vec![0.0; weights_sq.len()];
    let mut mult: Vec<f64> = sol.rows(n, h).iter().copied().collect();
    for c in soft {
        let k = c.entry.row - start;
        let e = c.entry.side.sign() * (dot(p.a().row(c.entry.row), &z) - p.bound(c.entry));
        eps[k] = e;
        mult.push(2.0 * weights_sq[k] * e);
    }
    let objective = z_weight * dot(&z, &z) + eps.iter().zip(weights_sq).map(|(e, w)| w * e * e).sum::<f64>();
    Some(EqSolution { z, eps, mult, objective })
}

/// True when the rows of the chosen hard constraints are linearly
/// independent.
fn independent(p: &LevelProblem, hard: &[Candidate]) -> bool {
    if hard.is_empty() {
        return true;
    }
    let n = p.dim();
    if hard.len() > n {
        return false;
    }
    let m = DMatrix::from_fn(hard.len(), n, |i, j| p.a().row(hard[i].entry.row)[j]);
    let sv = m.singular_values();
    sv.min() > RANK_TOL * sv.max().max(1.0)
}

fn primal_feasible(p: &LevelProblem, z: &[f64], eps: &[f64]) -> bool {
    let start = p.slack().slack_start;
    (0..p.nrows()).all(|r| {
        let az = dot(p.a().row(r), z);
        let e = if p.slack().is_soft(r) { eps[r - start] } else { 0.0 };
        let lo = p.lower()[r];
        let hi = p.upper()[r];
        let lo_ok = !lo.is_finite() || lo - az - e <= PRIMAL_REL_TOL * (1.0 + lo.abs());
        let hi_ok = !hi.is_finite() || az - e - hi <= PRIMAL_REL_TOL * (1.0 + hi.abs());
        lo_ok && hi_ok
    })
}

/// Visits every way of choosing `k` rows from `rows` and one option for
/// each chosen row.
fn for_each_pick(options: &[Vec<Candidate>], rows: &[usize], k: usize, mut visit: impl FnMut(&[Candidate])) {
    fn rec(
        options: &[Vec<Candidate>],
        rows: &[usize],
        start: usize,
        k: usize,
        cur: &mut Vec<Candidate>,
        visit: &mut dyn FnMut(&[Candidate]),
    ) {
        if cur.len() == k {
            visit(cur);
            return;
        }
        for i in start..rows.len() {
            if rows.len() - i < k - cur.len() {
                break;
            }
            for &c in &options[rows[i]] {
                cur.push(c);
                rec(options, rows, i + 1, k, cur, visit);
                cur.pop();
            }
        }
    }
    let mut cur = Vec::with_capacity(k);
    rec(options, rows, 0, k, &mut cur, &mut visit);
}

/// Enumerates active sets of increasing size and returns the best
/// KKT-feasible candidate of the smallest size that has one. By convexity
/// every KKT point is optimal, so stopping at that size loses nothing.
///
/// Multipliers are reported in the scaling used by the main solver
/// (objective divided by `2 rho^2`), hard rows first. `iterations` counts
/// candidate systems.
pub fn enumerate_level(p: &LevelProblem) -> Result<LevelSolution, SolveError> {
    let n = p.dim();
    let m_i = p.soft_rows();
    assert!(n + m_i <= MAX_ENUMERATION_SIZE, "instance too large for enumeration");
    let spec = p.slack();
    let weights_sq: Vec<f64> = spec.inv_weights_sq.iter().map(|iw| 1.0 / iw).collect();
    let (z_weight, dual_scale) = if m_i == 0 { (1.0, 2.0) } else { (spec.rho * spec.rho, 2.0 * spec.rho * spec.rho) };

    let options = row_options(p);
    let usable = |r: &usize| !options[*r].is_empty();
    let hard_rows: Vec<usize> = (0..p.nrows()).filter(|&r| !spec.is_soft(r)).filter(usable).collect();
    let soft_rows: Vec<usize> = (0..p.nrows()).filter(|&r| spec.is_soft(r)).filter(usable).collect();
    let mut evaluated = 0;

    for size in 0..=(n.min(hard_rows.len()) + soft_rows.len()) {
        let mut best: Option<(f64, Vec<Candidate>, EqSolution)> = None;
        for h in 0..=size.min(n).min(hard_rows.len()) {
            let s = size - h;
            if s > soft_rows.len() {
                continue;
            }
            for_each_pick(&options, &hard_rows, h, |hard| {
                if !independent(p, hard) {
                    return;
                }
                for_each_pick(&options, &soft_rows, s, |soft| {
                    evaluated += 1;
                    let Some(mut sol) = solve_equality(p, &weights_sq, z_weight, hard, soft) else { return };
                    let mut set: Vec<Candidate> = hard.iter().chain(soft).copied().collect();
                    // Sign-free soft rows take the side their slack points to.
                    for (k, c) in set.iter_mut().enumerate().skip(h) {
                        let idx = c.entry.row - spec.slack_start;
                        if !c.removable && sol.eps[idx] < 0.0 {
                            c.entry = ActiveRow::lower(c.entry.row);
                            sol.eps[idx] = -sol.eps[idx];
                            sol.mult[k] = -sol.mult[k];
                        }
                    }
                    let scale = 1.0 + sol.mult.iter().fold(0.0_f64, |a, m| a.max(m.abs()));
                    let dual_ok = set.iter().zip(&sol.mult).all(|(c, &m)| !c.removable || m >= -DUAL_REL_TOL * scale);
                    if !dual_ok || !primal_feasible(p, &sol.z, &sol.eps) {
                        return;
                    }
                    if best.as_ref().is_none_or(|(obj, _, _)| sol.objective < *obj) {
                        best = Some((sol.objective, set, sol));
                    }
                });
            });
        }
        if let Some((_, set, sol)) = best {
            let lambda = sol.mult.iter().map(|m| m / dual_scale).collect();
            return Ok(LevelSolution {
                z: DVector::from_vec(sol.z),
                eps: DVector::from_vec(sol.eps),
                lambda,
                working_set: WorkingSet::from_entries(set.iter().map(|c| c.entry)),
                iterations: evaluated,
                primal_rel_tol: PRIMAL_REL_TOL,
            });
        }
    }
    Err(SolveError::InfeasibleHardLevel)
}

/// Prioritized intersection computed level by level with
/// [`enumerate_level`], freezing perturbations exactly as the main solver
/// does.
pub fn enumerate_hierarchy(h: &Hierarchy) -> Result<HierarchySolution, SolveError> {
    let n = h.dim();
    let mut a_rows: Vec<Vec<f64>> = Vec::new();
    let mut lower = Vec::new();
    let mut upper = Vec::new();
    let push = |level: &crate::model::HierarchyLevel, a_rows: &mut Vec<Vec<f64>>, lower: &mut Vec<f64>, upper: &mut Vec<f64>| {
        for r in 0..level.nrows() {
            a_rows.push(level.poly.a().row(r).iter().copied().collect());
            lower.push(level.poly.lower()[r]);
            upper.push(level.poly.upper()[r]);
        }
    };
    let build = |a_rows: &Vec<Vec<f64>>| {
        let refs: Vec<&[f64]> = a_rows.iter().map(|r| r.as_slice()).collect();
        crate::factorization::RowMatrix::from_rows(n, &refs)
    };
    push(&h.levels[0], &mut a_rows, &mut lower, &mut upper);
    if h.num_levels() == 1 {
        let p = LevelProblem::hard(build(&a_rows), lower, upper)?;
        let s = enumerate_level(&p)?;
        return Ok(HierarchySolution {
            z_star: s.z,
            eps_star: Vec::new(),
            working_set: s.working_set,
            stats: Default::default(),
        });
    }
    let mut eps_star = Vec::new();
    let mut z = DVector::zeros(n);
    let mut ws = WorkingSet::new();
    for level in &h.levels[1..] {
        let start = a_rows.len();
        push(level, &mut a_rows, &mut lower, &mut upper);
        let p = LevelProblem::new(build(&a_rows), lower.clone(), upper.clone(), level.weights.as_slice(), h.rho)?;
        let s = enumerate_level(&p)?;
        let eps = s.eps.map(|e| e.max(0.0));
        for (k, &e) in eps.iter().enumerate() {
            lower[start + k] -= e;
            upper[start + k] += e;
        }
        eps_star.push(eps);
        z = s.z;
        ws = s.working_set;
    }
    Ok(HierarchySolution { z_star: z, eps_star, working_set: ws, stats: Default::default() })
}

/// Result of [`grid_pcap`].
#[derive(Debug, Clone, PartialEq)]
pub struct GridResult {
    pub z: DVector<f64>,
    /// Perturbations of levels `2..=p` read off at `z`.
    pub eps: Vec<DVector<f64>>,
    /// Number of grid points left after the last level.
    pub survivors: usize,
}

/// Exhaustive grid search for the prioritized intersection of a hierarchy in
/// one or two dimensions.
///
/// Grid points within half a cell of level 1 are kept; each following level
/// keeps the points whose violation is within grid resolution of the
/// smallest one. The reported point is the smallest-norm survivor, and the
/// perturbations are the positive parts of the residuals there. Accuracy is
/// of the order of `step`.
pub fn grid_pcap(h: &Hierarchy, lo: &[f64], hi: &[f64], step: f64) -> GridResult {
    let n = h.dim();
    assert!(n == 1 || n == 2, "grid oracle supports one or two dimensions");
    assert!(lo.len() == n && hi.len() == n && step > 0.0);
    let counts: Vec<usize> = (0..n).map(|d| ((hi[d] - lo[d]) / step).floor() as usize + 1).collect();
    let coord = |d: usize, i: usize| lo[d] + i as f64 * step;

    // Level 1: half-cell tolerance per row.
    let hard = &h.levels[0].poly;
    let row_slack: Vec<f64> = (0..hard.nrows())
        .map(|r| 0.5 * step * hard.a().row(r).iter().map(|v| v.abs()).sum::<f64>())
        .collect();
    let mut pts: Vec<f64> = Vec::new();
    let total: usize = counts.iter().product();
    let mut z = vec![0.0; n];
    for idx in 0..total {
        let mut rem = idx;
        for d in 0..n {
            z[d] = coord(d, rem % counts[d]);
            rem /= counts[d];
        }
        let inside = (0..hard.nrows()).all(|r| {
            let az: f64 = hard.a().row(r).iter().zip(&z).map(|(a, b)| a * b).sum();
            hard.lower()[r] - az <= row_slack[r] && az - hard.upper()[r] <= row_slack[r]
        });
        if inside {
            pts.extend_from_slice(&z);
        }
    }

    for level in &h.levels[1..] {
        if pts.is_empty() {
            break;
        }
        let viol: Vec<f64> = pts
            .chunks(n)
            .map(|p| level.violation(&DVector::from_column_slice(p)).unwrap())
            .collect();
        let best = viol.iter().cloned().fold(f64::INFINITY, f64::min);
        let lip = (0..level.nrows())
            .map(|r| {
                let w = level.weights[r];
                w * w * level.poly.a().row(r).norm_squared()
            })
            .sum::<f64>()
            .sqrt();
        let cutoff = best.sqrt() + lip * step * (n as f64).sqrt();
        let mut next = Vec::new();
        for (p, v) in pts.chunks(n).zip(&viol) {
            if v.sqrt() <= cutoff {
                next.extend_from_slice(p);
            }
        }
        pts = next;
    }

    let survivors = pts.len() / n;
    let z = pts
        .chunks(n)
        .min_by(|a, b| dot(a, a).total_cmp(&dot(b, b)))
        .map(DVector::from_column_slice)
        .unwrap_or_else(|| DVector::from_element(n, f64::NAN));
    let eps = h.levels[1..]
        .iter()
        .map(|level| {
            let (lo_side, up_side) = level.poly.residual(&z).unwrap();
            DVector::from_fn(level.nrows(), |r, _| lo_side[r].max(up_side[r]).max(0.0))
        })
        .collect();
    GridResult { z, eps, survivors }
}
