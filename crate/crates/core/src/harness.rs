//! Random hierarchy generator and benchmark runner.
//!
//! Instances follow the usual random-polyhedra recipe: `A_i ~ U[0,1]`,
//! `upper_i = U[0,1] + A_i z_i` for a planted `z_i ~ U[-1,1]`, and each row is
//! an equality (`lower = upper`) with probability `sigma`, otherwise
//! `lower = upper - v` with `v ~ U[0,1]`.
//!
//! Randomness comes from ChaCha8. The instance seed initializes the
//! generator and level `i` (zero-based) draws from stream `i + 1`, so adding
//! levels never changes the earlier ones. Every row consumes the same number
//! of draws whatever `sigma` is, so two configurations that differ only in
//! `sigma` share `A` and `upper` exactly. Benchmark instance `j` uses seed
//! `seed + j`.
//!
//! The planted point only satisfies the upper bounds. Nonemptiness of each
//! level comes from `m_max <= n_z` instead: a random `A` then has full row
//! rank almost surely, so any `lower <= upper` is attainable. Configurations
//! with more rows than variables may produce an empty first level.

use std::io::Write;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::SolveError;
use crate::hierarchy::{prioritized_intersection_with, HierarchyOptions};
use crate::model::{Hierarchy, HierarchyLevel, Polyhedron};

/// Regularization used for generated instances. Generated rows have norms
/// near `sqrt(n_z / 3)` rather than 1, and the later frozen sets shrink to
/// width `O(rho^2)`; at `rho = 1e-3` the normal equations of those sets are
/// too ill-conditioned to solve reliably in double precision.
pub const GEN_RHO: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenConfig {
    pub seed: u64,
    pub n_z: usize,
    pub p: usize,
    /// Inclusive range of rows per level.
    pub m_min: usize,
    pub m_max: usize,
    /// Probability that a row is an equality.
    pub sigma: f64,
    pub rho: f64,
}

impl Default for GenConfig {
    fn default() -> Self {
        Self { seed: 0, n_z: 50, p: 10, m_min: 1, m_max: 20, sigma: 0.0, rho: GEN_RHO }
    }
}

impl GenConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(0.0..=1.0).contains(&self.sigma) {
            return Err(format!("sigma must lie in [0, 1], got {}", self.sigma));
        }
        if self.m_min > self.m_max {
            return Err(format!("empty row range {}..={}", self.m_min, self.m_max));
        }
        if self.n_z == 0 {
            return Err("n_z must be at least 1".into());
        }
        if self.p == 0 {
            return Err("p must be at least 1".into());
        }
        if !(self.rho > 0.0) {
            return Err(format!("rho must be positive, got {}", self.rho));
        }
        Ok(())
    }

    /// Whether every level is nonempty almost surely.
    pub fn levels_nonempty(&self) -> bool {
        self.m_max <= self.n_z
    }
}

/// A generated hierarchy together with the point planted in each level.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedInstance {
    pub hierarchy: Hierarchy,
    pub planted: Vec<DVector<f64>>,
}

pub fn generate(cfg: &GenConfig) -> Hierarchy {
    generate_with_planted(cfg).hierarchy
}

pub fn generate_with_planted(cfg: &GenConfig) -> GeneratedInstance {
    let base = ChaCha8Rng::seed_from_u64(cfg.seed);
    let n = cfg.n_z;
    let mut levels = Vec::with_capacity(cfg.p);
    let mut planted = Vec::with_capacity(cfg.p);
    for i in 0..cfg.p {
        let mut rng = base.clone();
        rng.set_stream(i as u64 + 1);
        rng.set_word_pos(0);
        let m = rng.random_range(cfg.m_min..=cfg.m_max);
        let mut a = DMatrix::zeros(m, n);
        for r in 0..m {
            for c in 0..n {
                a[(r, c)] = rng.random::<f64>();
            }
        }
        let z_plant = DVector::from_fn(n, |_, _| rng.random_range(-1.0..=1.0));
        let az = &a * &z_plant;
        let mut lower = DVector::zeros(m);
        let mut upper = DVector::zeros(m);
        for r in 0..m {
            let offset: f64 = rng.random();
            let equality = rng.random::<f64>() < cfg.sigma;
            let v: f64 = rng.random();
            upper[r] = offset + az[r];
            lower[r] = if equality { upper[r] } else { upper[r] - v };
        }
        let poly = Polyhedron::new(a, lower, upper).expect("shapes agree by construction");
        levels.push(HierarchyLevel::new(poly));
        planted.push(z_plant);
    }
    GeneratedInstance { hierarchy: Hierarchy::new(levels, cfg.rho), planted }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchConfig {
    pub seed: u64,
    pub sigma_grid: Vec<f64>,
    pub reps: usize,
    pub n_z: usize,
    pub p: usize,
    pub m_min: usize,
    pub m_max: usize,
    pub rho: f64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            sigma_grid: vec![0.0, 0.25, 0.5, 0.75, 1.0],
            reps: 100,
            n_z: 50,
            p: 10,
            m_min: 1,
            m_max: 20,
            rho: GEN_RHO,
        }
    }
}

impl BenchConfig {
    pub fn gen_config(&self, sigma: f64, rep: usize) -> GenConfig {
        GenConfig {
            seed: self.seed.wrapping_add(rep as u64),
            n_z: self.n_z,
            p: self.p,
            m_min: self.m_min,
            m_max: self.m_max,
            sigma,
            rho: self.rho,
        }
    }
}

/// One CSV row: timings of the warm-started solve and mean per-level
/// iteration counts with and without warm starting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub sigma: f64,
    pub mean_s: f64,
    pub min_s: f64,
    pub max_s: f64,
    pub mean_iters_cold: f64,
    pub mean_iters_warm: f64,
}

#[derive(Debug, Clone, Copy)]
struct InstanceResult {
    seconds: f64,
    iters_cold: f64,
    iters_warm: f64,
}

fn run_instance(cfg: &GenConfig) -> Result<InstanceResult, SolveError> {
    let h = generate(cfg);
    let warm_opts = HierarchyOptions::default();
    let cold_opts = HierarchyOptions { warm_start: false, ..warm_opts };
    let start = Instant::now();
    let warm = prioritized_intersection_with(&h, None, &warm_opts)?;
    let seconds = start.elapsed().as_secs_f64();
    let cold = prioritized_intersection_with(&h, None, &cold_opts)?;
    Ok(InstanceResult {
        seconds,
        iters_cold: cold.stats.mean_iterations(),
        iters_warm: warm.stats.mean_iterations(),
    })
}

/// Solves `reps` instances for every sigma, in parallel. With `reps = 0`
/// no rows are produced.
pub fn run_benchmark(cfg: &BenchConfig) -> Result<Vec<BenchRow>, SolveError> {
    let mut rows = Vec::new();
    if cfg.reps == 0 {
        return Ok(rows);
    }
    for &sigma in &cfg.sigma_grid {
        let results: Vec<InstanceResult> = (0..cfg.reps)
            .into_par_iter()
            .map(|j| run_instance(&cfg.gen_config(sigma, j)))
            .collect::<Result<_, _>>()?;
        let k = results.len() as f64;
        rows.push(BenchRow {
            sigma,
            mean_s: results.iter().map(|r| r.seconds).sum::<f64>() / k,
            min_s: results.iter().map(|r| r.seconds).fold(f64::INFINITY, f64::min),
            max_s: results.iter().map(|r| r.seconds).fold(0.0, f64::max),
            mean_iters_cold: results.iter().map(|r| r.iters_cold).sum::<f64>() / k,
            mean_iters_warm: results.iter().map(|r| r.iters_warm).sum::<f64>() / k,
        });
    }
    Ok(rows)
}

pub const BENCH_HEADER: [&str; 6] = ["sigma", "mean_s", "min_s", "max_s", "mean_iters_cold", "mean_iters_warm"];

/// Writes the report as UTF-8 CSV with a header row.
pub fn write_bench_csv<W: Write>(rows: &[BenchRow], out: W) -> Result<(), csv::Error> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(BENCH_HEADER)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sigma_extremes() {
        let cfg = GenConfig { seed: 3, sigma: 1.0, ..Default::default() };
        let h = generate(&cfg);
        assert_eq!(h.num_levels(), 10);
        for l in &h.levels {
            assert!((0..l.nrows()).all(|r| l.poly.is_equality(r)));
        }
        let cfg = GenConfig { sigma: 0.0, ..cfg };
        for l in &generate(&cfg).levels {
            assert!((0..l.nrows()).all(|r| l.poly.lower()[r] < l.poly.upper()[r]));
        }
    }

    #[test]
    fn planted_point_satisfies_upper_side() {
        for seed in 0..5 {
            let inst = generate_with_planted(&GenConfig { seed, sigma: 0.5, ..Default::default() });
            for (level, z) in inst.hierarchy.levels.iter().zip(&inst.planted) {
                let (_, up) = level.poly.residual(z).unwrap();
                assert!(up.iter().all(|&v| v <= 0.0));
                assert!((1..=20).contains(&level.nrows()));
            }
        }
    }

    #[test]
    fn sigma_does_not_change_shared_data() {
        let a = generate(&GenConfig { seed: 11, sigma: 0.2, ..Default::default() });
        let b = generate(&GenConfig { seed: 11, sigma: 0.9, ..Default::default() });
        for (x, y) in a.levels.iter().zip(&b.levels) {
            assert_eq!(x.poly.a(), y.poly.a());
            assert_eq!(x.poly.upper(), y.poly.upper());
        }
    }

    #[test]
    fn zero_reps_gives_header_only() {
        let cfg = BenchConfig { reps: 0, ..Default::default() };
        let rows = run_benchmark(&cfg).unwrap();
        let mut buf = Vec::new();
        write_bench_csv(&rows, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "sigma,mean_s,min_s,max_s,mean_iters_cold,mean_iters_warm\n");
    }

    #[test]
    fn config_validation() {
        assert!(GenConfig::default().validate().is_ok());
        assert!(GenConfig { sigma: 1.5, ..Default::default() }.validate().is_err());
        assert!(GenConfig { m_min: 5, m_max: 2, ..Default::default() }.validate().is_err());
        assert!(GenConfig { n_z: 0, ..Default::default() }.validate().is_err());
    }
}
