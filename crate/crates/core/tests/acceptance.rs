//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each
//! and exits nonzero if any failed.

use std::time::{Duration, Instant};

use hqp::factorization::{ActiveRow, AddOutcome, LdlFactors, RowMatrix, SlackSpec};
use hqp::harness::{generate, generate_with_planted, run_benchmark, BenchConfig, GenConfig};
use hqp::io::{write_hierarchy, write_solution, HierarchyFile};
use hqp::mpc::{simulate, Obstacle, Scenario, STEERING_LIMIT};
use hqp::oracle::{enumerate_hierarchy, grid_pcap};
use hqp::{prioritized_intersection, Hierarchy, HierarchyLevel, Polyhedron, Side, SolveError};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(elapsed: Duration, budget_s: f64) -> Result<(), String> {
    check(elapsed.as_secs_f64() < budget_s, || format!("took {:.1} s, budget {budget_s} s", elapsed.as_secs_f64()))
}

fn rel_close(a: &[f64], b: &[f64], tol: f64) -> bool {
    let diff = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let norm = b.iter().map(|y| y * y).sum::<f64>().sqrt();
    a.len() == b.len() && diff <= tol * (1.0 + norm)
}

fn random_level(rng: &mut ChaCha8Rng, n: usize, m: usize, center: &DVector<f64>, sigma: f64) -> HierarchyLevel {
    let a = DMatrix::from_fn(m, n, |_, _| rng.random_range(-1.0..1.0));
    let ac = &a * center;
    let mut lower = DVector::zeros(m);
    let mut upper = DVector::zeros(m);
    for r in 0..m {
        if rng.random::<f64>() < sigma {
            lower[r] = ac[r];
            upper[r] = ac[r];
        } else {
            lower[r] = ac[r] - rng.random::<f64>();
            upper[r] = ac[r] + rng.random::<f64>();
        }
    }
    HierarchyLevel::new(Polyhedron::new(a, lower, upper).unwrap())
}

fn max_row_norm(h: &Hierarchy) -> f64 {
    h.levels
        .iter()
        .flat_map(|l| l.poly.a().row_iter().map(|r| r.norm()).collect::<Vec<_>>())
        .fold(0.0, f64::max)
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let rho = 1e-3;
    let mut worst_p1: f64 = 0.0;
    let mut worst_p2: f64 = 0.0;
    let mut p2_fail = Vec::new();
    let mut worst_halving: f64 = 0.0;
    for seed in 0..500u64 {
        let n = rng.random_range(1..=10);
        let p = rng.random_range(2..=4);

        // Property 1 on generator instances (nonempty level 1 by m <= n).
        let cfg = GenConfig { seed, n_z: n, p, m_min: 1, m_max: n, sigma: 0.5, rho, ..Default::default() };
        let h = generate(&cfg);
        let sol = match prioritized_intersection(&h, None) {
            Ok(s) => s,
            Err(e) => return Err(format!("seed {seed}: nonempty level 1 gave {e}")),
        };
        let v = h.levels[0].poly.max_violation(&sol.z_star).unwrap();
        worst_p1 = worst_p1.max(v);
        check(v <= 1e-8, || format!("seed {seed}: level-1 violation {v:e}"))?;

        // Property 2 with one point planted in every level.
        let center = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
        let levels: Vec<HierarchyLevel> = (0..p)
            .map(|_| {
                let m = rng.random_range(1..=n);
                random_level(&mut rng, n, m, &center, 0.3)
            })
            .collect();
        let h = Hierarchy::new(levels.clone(), rho);
        let sol = prioritized_intersection(&h, None).map_err(|e| format!("seed {seed}: planted instance gave {e}"))?;
        let bound = rho * rho * (1.0 + sol.z_star.norm()) * max_row_norm(&h);
        let e = sol.eps_star.iter().map(|e| e.amax()).fold(0.0, f64::max);
        worst_p2 = worst_p2.max(e / bound);
        if e > bound {
            p2_fail.push(seed);
        }
        // Halving rho should shrink eps about fourfold.
        let half = prioritized_intersection(&Hierarchy::new(levels, rho / 2.0), None).map_err(|e| e.to_string())?;
        let e_half = half.eps_star.iter().map(|e| e.amax()).fold(0.0, f64::max);
        if e > 1e-14 {
            worst_halving = worst_halving.max(e_half / e);
        }

        // Property 3: a contradictory copy of a level-1 row empties it.
        let mut levels = h.levels.clone();
        let hard = &levels[0].poly;
        let r = rng.random_range(0..hard.nrows());
        let row: Vec<f64> = hard.a().row(r).iter().cloned().collect();
        let gap = 1.0 + rng.random::<f64>();
        let extra = Polyhedron::from_rows(n, &[(hard.upper()[r] + gap, &row, f64::INFINITY)]).unwrap();
        levels[0] = HierarchyLevel::new(hard.intersect(&extra).unwrap());
        let empty = Hierarchy::new(levels, rho);
        match prioritized_intersection(&empty, None) {
            Err(SolveError::InfeasibleHardLevel) => {}
            other => return Err(format!("seed {seed}: empty level 1 gave {:?}", other.map(|s| s.z_star))),
        }
    }
    let detail = format!(
        "max level-1 violation {worst_p1:.1e}; eps over rho^2 (1+|z|) max-row-norm bound exceeded on {}/500 instances \
         (max ratio {worst_p2:.1}, first seeds {:?}); eps(rho/2)/eps(rho) <= {worst_halving:.3}; {:.1} s",
        p2_fail.len(),
        &p2_fail[..p2_fail.len().min(5)],
        start.elapsed().as_secs_f64()
    );
    check(p2_fail.is_empty(), || detail.clone())?;
    within(start.elapsed(), 60.0)?;
    Ok(detail)
}

fn criterion_2() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    for seed in 0..500u64 {
        let n_z = rng.random_range(1..=6);
        let cfg = GenConfig {
            seed: 10_000 + seed,
            n_z,
            p: rng.random_range(1..=4),
            m_min: 1,
            m_max: n_z.min(4),
            sigma: [0.0, 0.5, 1.0][rng.random_range(0..3)],
            ..Default::default()
        };
        let h = generate(&cfg);
        let fast = prioritized_intersection(&h, None).map_err(|e| format!("seed {seed}: {e}"))?;
        let slow = enumerate_hierarchy(&h).map_err(|e| format!("seed {seed}: oracle {e}"))?;
        check(rel_close(fast.z_star.as_slice(), slow.z_star.as_slice(), 1e-6), || {
            format!("seed {seed}: z {} vs {}", fast.z_star, slow.z_star)
        })?;
        for (k, (e1, e2)) in fast.eps_star.iter().zip(&slow.eps_star).enumerate() {
            check(rel_close(e1.as_slice(), e2.as_slice(), 1e-6), || format!("seed {seed}, level {}: eps differ", k + 2))?;
        }
    }
    within(start.elapsed(), 120.0)?;
    Ok(format!("500 instances, {:.1} s", start.elapsed().as_secs_f64()))
}

/// Row of the explicit matrix `M = [A, slack block]` for a working entry.
fn explicit_m_row(a: &RowMatrix, e: ActiveRow, spec: &SlackSpec) -> Vec<f64> {
    let s = if e.side == Side::Upper { 1.0 } else { -1.0 };
    let mut out: Vec<f64> = a.row(e.row).iter().map(|v| s * v).collect();
    for k in 0..spec.inv_weights_sq.len() {
        let coeff = if e.row == spec.slack_start + k { -spec.rho * spec.inv_weights_sq[k].sqrt() } else { 0.0 };
        out.push(coeff);
    }
    out
}

fn criterion_3() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let mut sets = 0;
    let mut worst: f64 = 0.0;
    while sets < 200 {
        let n = rng.random_range(3..=10);
        let m = rng.random_range(n..=2 * n);
        let a = DMatrix::from_fn(m, n, |_, _| rng.random_range(-1.0..1.0));
        let a = RowMatrix::from_dmatrix(&a);
        let slack_start = rng.random_range(0..m);
        let weights: Vec<f64> = (slack_start..m).map(|_| rng.random_range(0.5..2.0)).collect();
        let spec = SlackSpec::from_weights(slack_start, &weights, rng.random_range(1e-3..0.5));
        let mut f = LdlFactors::new();
        for _ in 0..20 {
            let grow = f.is_empty() || (f.len() < n && rng.random::<f64>() < 0.65);
            if grow {
                let free: Vec<usize> = (0..m).filter(|&r| f.position(r).is_none()).collect();
                let row = free[rng.random_range(0..free.len())];
                let side = if rng.random::<bool>() { Side::Upper } else { Side::Lower };
                if let AddOutcome::Dependent { .. } = f.add_row(&a, ActiveRow::new(row, side), &spec).unwrap() {
                    continue;
                }
            } else {
                f.remove_row(rng.random_range(0..f.len())).unwrap();
            }

            let rows: Vec<Vec<f64>> = f.order().iter().map(|&e| explicit_m_row(&a, e, &spec)).collect();
            let k = rows.len();
            let gram = DMatrix::from_fn(k, k, |r, c| rows[r].iter().zip(&rows[c]).map(|(x, y)| x * y).sum::<f64>());
            let chol = gram.cholesky().ok_or("explicit Gram matrix is not positive definite")?;
            let lc = chol.l();
            let l = f.l_dense();
            for i in 0..k {
                let d_ref = lc[(i, i)] * lc[(i, i)];
                let err = (f.diag()[i] - d_ref).abs() / d_ref.max(1.0);
                worst = worst.max(err);
                check(err <= 1e-10, || format!("set {sets}: D[{i}] {} vs {d_ref}", f.diag()[i]))?;
                for j in 0..i {
                    let l_ref = lc[(i, j)] / lc[(j, j)];
                    let err = (l[(i, j)] - l_ref).abs() / l_ref.abs().max(1.0);
                    worst = worst.max(err);
                    check(err <= 1e-10, || format!("set {sets}: L[{i},{j}] {} vs {l_ref}", l[(i, j)]))?;
                }
            }
            sets += 1;
        }
    }
    within(start.elapsed(), 10.0)?;
    Ok(format!("{sets} working sets, max entry error {worst:.1e}"))
}

fn level1d(lo: f64, hi: f64) -> HierarchyLevel {
    HierarchyLevel::new(Polyhedron::from_rows(1, &[(lo, &[1.0], hi)]).unwrap())
}

fn criterion_4() -> Outcome {
    // Single soft constraint z <= -1 under an unconstrained hard level.
    let h = Hierarchy::new(vec![HierarchyLevel::new(Polyhedron::unconstrained(1)), level1d(f64::NEG_INFINITY, -1.0)], 0.1);
    let sol = prioritized_intersection(&h, None).map_err(|e| e.to_string())?;
    let (z, eps) = (sol.z_star[0], sol.eps_star[0][0]);
    check((z + 1.0 / 1.01).abs() <= 1e-12, || format!("z = {z}"))?;
    check((eps - 0.01 / 1.01).abs() <= 1e-12, || format!("eps = {eps}"))?;

    // z <= 0 outranks z >= 1.
    let h = Hierarchy::new(vec![level1d(f64::NEG_INFINITY, 0.0), level1d(1.0, f64::INFINITY)], 1e-3);
    let sol = prioritized_intersection(&h, None).map_err(|e| e.to_string())?;
    let eps2 = sol.eps_star[0][0];
    check((eps2 - 1.0).abs() <= 1e-4, || format!("conflict eps = {eps2}"))?;
    let grid = grid_pcap(&h, &[-2.0], &[2.0], 1e-4);
    check((grid.eps[0][0] - eps2).abs() <= 1e-3, || format!("grid eps {} vs {eps2}", grid.eps[0][0]))?;
    Ok(format!("z = {z:.15}, eps = {eps:.15}, conflict eps = {eps2:.9}"))
}

/// Square of half-width `r` centred at `c`, rotated by `theta`.
fn rotated_square(c: [f64; 2], r: f64, theta: f64) -> HierarchyLevel {
    let (s, co) = theta.sin_cos();
    let u = [co, s];
    let v = [-s, co];
    let cu = u[0] * c[0] + u[1] * c[1];
    let cv = v[0] * c[0] + v[1] * c[1];
    HierarchyLevel::new(Polyhedron::from_rows(2, &[(cu - r, &u, cu + r), (cv - r, &v, cv + r)]).unwrap())
}

fn criterion_5() -> Outcome {
    let sets = [
        rotated_square([2.0, 0.0], 0.5, 0.3),
        rotated_square([-1.0, 1.8], 0.5, 0.9),
        rotated_square([-1.0, -1.8], 0.5, 1.4),
    ];
    let room = HierarchyLevel::new(
        Polyhedron::from_rows(2, &[(-4.0, &[1.0, 0.0], 4.0), (-4.0, &[0.0, 1.0], 4.0)]).unwrap(),
    );
    let step = 5e-3;
    let mut points = Vec::new();
    let mut worst: f64 = 0.0;
    for ordering in 0..3 {
        let mut levels = vec![room.clone()];
        levels.extend((0..3).map(|k| sets[(ordering + k) % 3].clone()));
        let h = Hierarchy::new(levels, 1e-3);
        let z = prioritized_intersection(&h, None).map_err(|e| e.to_string())?.z_star;
        let grid = grid_pcap(&h, &[-3.5, -3.5], &[3.5, 3.5], step);
        let gap = (&z - &grid.z).amax();
        worst = worst.max(gap);
        check(gap <= 2.0 * step, || format!("ordering {}: z {z} vs grid {}", ordering + 1, grid.z))?;
        points.push(z);
    }
    let mut min_dist = f64::INFINITY;
    for i in 0..3 {
        for j in i + 1..3 {
            min_dist = min_dist.min((&points[i] - &points[j]).norm());
        }
    }
    check(min_dist > 1e-2, || format!("orderings too close: {min_dist:e}"))?;
    Ok(format!("min pairwise distance {min_dist:.3}, max grid gap {worst:.1e} (step {step})"))
}

fn criterion_6() -> Outcome {
    let start = Instant::now();
    let rows = run_benchmark(&BenchConfig::default()).map_err(|e| e.to_string())?;
    let mut summary = Vec::new();
    for r in &rows {
        check(r.mean_iters_warm <= r.mean_iters_cold, || {
            format!("sigma {}: warm {} > cold {}", r.sigma, r.mean_iters_warm, r.mean_iters_cold)
        })?;
        summary.push(format!("{}: {:.1}/{:.1}", r.sigma, r.mean_iters_warm, r.mean_iters_cold));
    }
    within(start.elapsed(), 300.0)?;
    Ok(format!("warm/cold per sigma [{}], {:.1} s", summary.join(", "), start.elapsed().as_secs_f64()))
}

/// Obstacles with at least one horizon step inside their window.
fn visible(sc: &Scenario, t: f64) -> Vec<usize> {
    let horizon = sc.mpc.horizon as f64 * sc.mpc.ts;
    (0..sc.obstacles.len())
        .filter(|&i| {
            let o = &sc.obstacles[i];
            o.t_min <= t + horizon && t + sc.mpc.ts <= o.t_max
        })
        .collect()
}

fn disjoint(a: &Obstacle, b: &Obstacle) -> bool {
    a.s_max < b.s_min || b.s_max < a.s_min
}

fn criterion_7() -> Outcome {
    const TOL: f64 = 1e-6;
    // Conflicts are judged once the visible obstacles have been fixed this
    // long; right after a switch the short horizon lets the car overshoot.
    const SETTLE: f64 = 3.5;
    let sc = Scenario::three_obstacles();
    let mut traces = Vec::new();
    let mut medians = Vec::new();
    for ordering in 1..=3 {
        let sim = simulate(&sc, ordering).map_err(|e| e.to_string())?;
        check(sim.steps.len() == 2000, || format!("{} steps", sim.steps.len()))?;
        let level_of = |i: usize| 3 + sim.ordering.iter().position(|&j| j == i).unwrap();
        let mut last_change = 0.0;
        let mut prev = visible(&sc, 0.0);
        let mut settled = 0;
        for step in &sim.steps {
            check(step.delta_f.abs() <= STEERING_LIMIT + 1e-8, || format!("ordering {ordering}: |delta_f| {} at t={}", step.delta_f, step.t))?;
            let active = visible(&sc, step.t);
            if active != prev {
                last_change = step.t;
                prev = active.clone();
            }
            if active.len() < 2 || step.t - last_change < SETTLE {
                continue;
            }
            let top = *active.iter().min_by_key(|&&i| level_of(i)).unwrap();
            let v = step.violation[level_of(top)];
            check(v <= TOL, || format!("ordering {ordering}: top band violated by {v:e} at t={}", step.t))?;
            for &i in &active {
                if i != top && disjoint(&sc.obstacles[i], &sc.obstacles[top]) {
                    let v = step.violation[level_of(i)];
                    check(v > TOL, || format!("ordering {ordering}: yielding band violation {v:e} at t={}", step.t))?;
                }
            }
            settled += 1;
        }
        check(settled > 200, || format!("ordering {ordering}: only {settled} settled conflict steps"))?;
        medians.push(sim.median_solve_time());
        traces.push(sim.steps.iter().map(|s| s.x[0]).collect::<Vec<_>>());
    }
    let mut min_diff = f64::INFINITY;
    for i in 0..3 {
        for j in i + 1..3 {
            let d = traces[i].iter().zip(&traces[j]).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            min_diff = min_diff.min(d);
        }
    }
    check(min_diff > 0.01, || format!("orderings coincide: max |ds| {min_diff:e}"))?;
    let ms: Vec<String> = medians.iter().map(|t| format!("{:.2}", t * 1e3)).collect();
    let budget = if medians.iter().all(|&t| t < 0.01) { "within" } else { "over" };
    Ok(format!("min pairwise max|ds| {min_diff:.2} m, median solve [{}] ms ({budget} the 10 ms sample time)", ms.join(", ")))
}

fn criterion_8() -> Outcome {
    for seed in [0u64, 7, 12345] {
        let cfg = GenConfig { seed, n_z: 12, p: 4, m_max: 8, sigma: 0.4, ..Default::default() };
        let a = generate_with_planted(&cfg);
        let b = generate_with_planted(&cfg);
        check(a == b, || format!("seed {seed}: instances differ"))?;
        let file = |h: &Hierarchy| write_hierarchy(&HierarchyFile { hierarchy: h.clone(), objective: None });
        check(file(&a.hierarchy) == file(&b.hierarchy), || format!("seed {seed}: files differ"))?;
        let s1 = prioritized_intersection(&a.hierarchy, None).map_err(|e| e.to_string())?;
        let s2 = prioritized_intersection(&b.hierarchy, None).map_err(|e| e.to_string())?;
        let w1 = write_solution(&a.hierarchy, &s1, None);
        let w2 = write_solution(&b.hierarchy, &s2, None);
        check(w1 == w2, || format!("seed {seed}: solution files differ"))?;
    }
    let bench = BenchConfig { reps: 6, n_z: 15, p: 4, m_max: 10, ..Default::default() };
    let r1 = run_benchmark(&bench).map_err(|e| e.to_string())?;
    let r2 = run_benchmark(&bench).map_err(|e| e.to_string())?;
    let iters = |rows: &[hqp::harness::BenchRow]| rows.iter().map(|r| (r.mean_iters_cold, r.mean_iters_warm)).collect::<Vec<_>>();
    check(iters(&r1) == iters(&r2), || "benchmark iteration counts differ".into())?;
    Ok("instances, hierarchy files, solution files and benchmark iteration counts identical".into())
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 8] = [
        ("1 property suite", criterion_1),
        ("2 oracle equivalence", criterion_2),
        ("3 implicit-slack factorization", criterion_3),
        ("4 analytic 1D cases", criterion_4),
        ("5 ordering sensitivity", criterion_5),
        ("6 warm-start benefit", criterion_6),
        ("7 MPC orderings", criterion_7),
        ("8 determinism", criterion_8),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (name, run) in criteria {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        match run() {
            Ok(detail) => println!("PASS criterion {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL criterion {name}: {detail}");
            }
        }
    }
    if failed > 0 {
        eprintln!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
