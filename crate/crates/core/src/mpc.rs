//! Lateral vehicle control with prioritized constraints.
//!
//! A linear bicycle model at constant speed, states `x = [s, psi, beta,
//! omega]` (lateral position, yaw, sideslip, yaw rate) and input `u =
//! delta_f` (front steering angle). Each controller step condenses the
//! predictions onto the input sequence `U in R^N` and builds the hierarchy
//!
//! ```text
//!     P1   |delta_f| <= pi/6
//!     P2   |delta_f - beta - (l_f/v) omega| <= pi/22.5,  |(l_r/v) omega - beta| <= pi/22.5
//!     P3   |s| <= W/2
//!     P4.. s in [s_min, s_max] while t in [t_min, t_max], one level per obstacle
//! ```
//!
//! then minimizes a quadratic cost steering `s` to zero over the prioritized
//! intersection.

use std::f64::consts::PI;
use std::io::Write;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::error::SolveError;
use crate::hierarchy::{solve_with_objective_with, HierarchyOptions};
use crate::model::{Hierarchy, HierarchyLevel, Polyhedron};

pub const STEERING_LIMIT: f64 = PI / 6.0;
pub const SLIP_LIMIT: f64 = PI / 22.5;

/// Parameters of the bicycle model. The defaults describe a generic
/// mid-size passenger car at 15 m/s on an 8 m road.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VehicleParams {
    /// Speed (m/s).
    pub v: f64,
    /// Cornering stiffness per axle (N/rad).
    pub c_alpha: f64,
    /// Mass (kg).
    pub m_mass: f64,
    /// Yaw inertia (kg m^2).
    pub i_zz: f64,
    /// Distances from the center of gravity to the front and rear axle (m).
    pub l_f: f64,
    pub l_r: f64,
    /// Road width (m).
    pub w_road: f64,
}

impl Default for VehicleParams {
    fn default() -> Self {
        Self { v: 15.0, c_alpha: 8.0e4, m_mass: 1500.0, i_zz: 2500.0, l_f: 1.2, l_r: 1.6, w_road: 8.0 }
    }
}

impl VehicleParams {
    pub fn validate(&self) -> Result<(), MpcError> {
        let fields = [
            ("v", self.v),
            ("c_alpha", self.c_alpha),
            ("m_mass", self.m_mass),
            ("i_zz", self.i_zz),
            ("l_f", self.l_f),
            ("l_r", self.l_r),
            ("w_road", self.w_road),
        ];
        for (name, value) in fields {
            if !(value > 0.0 && value.is_finite()) {
                return Err(MpcError::Config(format!("{name} must be positive, got {value}")));
            }
        }
        Ok(())
    }
}

/// Required lateral band `s in [s_min, s_max]` during `[t_min, t_max]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Obstacle {
    pub s_min: f64,
    pub s_max: f64,
    pub t_min: f64,
    pub t_max: f64,
    /// Rank among the obstacles under ordering 1 (0 is the most important).
    pub priority: usize,
}

impl Obstacle {
    pub fn active_at(&self, t: f64) -> bool {
        self.t_min <= t && t <= self.t_max
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MpcConfig {
    /// Prediction horizon in steps.
    pub horizon: usize,
    /// Sample time (s).
    pub ts: f64,
    /// Cost weight on the predicted lateral position.
    pub q_s: f64,
    /// Cost weight on the steering input.
    pub r_u: f64,
    /// Regularization of the hierarchy.
    pub rho: f64,
}

impl Default for MpcConfig {
    fn default() -> Self {
        Self { horizon: 30, ts: 0.01, q_s: 1.0, r_u: 0.01, rho: 1e-3 }
    }
}

impl MpcConfig {
    pub fn validate(&self) -> Result<(), MpcError> {
        if self.horizon == 0 {
            return Err(MpcError::Config("horizon must be at least 1".into()));
        }
        for (name, value) in [("ts", self.ts), ("r_u", self.r_u), ("rho", self.rho)] {
            if !(value > 0.0 && value.is_finite()) {
                return Err(MpcError::Config(format!("{name} must be positive, got {value}")));
            }
        }
        if !(self.q_s >= 0.0 && self.q_s.is_finite()) {
            return Err(MpcError::Config(format!("q_s must be nonnegative, got {}", self.q_s)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Scenario {
    pub vehicle: VehicleParams,
    pub mpc: MpcConfig,
    /// Simulated time (s).
    pub duration: f64,
    /// Initial state `[s, psi, beta, omega]`.
    pub x0: [f64; 4],
    pub obstacles: Vec<Obstacle>,
}

impl Default for Scenario {
    fn default() -> Self {
        Self {
            vehicle: VehicleParams::default(),
            mpc: MpcConfig::default(),
            duration: 20.0,
            x0: [0.0; 4],
            obstacles: Vec::new(),
        }
    }
}

impl Scenario {
    /// Three mutually exclusive bands (left, right, center) whose windows
    /// overlap, so every ordering resolves the conflicts differently.
    pub fn three_obstacles() -> Self {
        let band = |s_min, s_max, t_min, t_max, priority| Obstacle { s_min, s_max, t_min, t_max, priority };
        Self {
            obstacles: vec![
                band(0.75, 2.75, 2.0, 14.0, 0),
                band(-2.75, -0.75, 5.0, 17.0, 2),
                band(-0.3, 0.3, 8.0, 19.0, 1),
            ],
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), MpcError> {
        self.vehicle.validate()?;
        self.mpc.validate()?;
        if !(self.duration >= 0.0 && self.duration.is_finite()) {
            return Err(MpcError::Config(format!("duration must be nonnegative, got {}", self.duration)));
        }
        if self.x0.iter().any(|v| !v.is_finite()) {
            return Err(MpcError::Config("x0 must be finite".into()));
        }
        let mut seen = vec![false; self.obstacles.len()];
        for (i, o) in self.obstacles.iter().enumerate() {
            if !(o.s_min <= o.s_max) || !(o.t_min <= o.t_max) {
                return Err(MpcError::Config(format!("obstacle {i} has an empty band or window")));
            }
            match seen.get_mut(o.priority) {
                Some(s) if !*s => *s = true,
                _ => {
                    return Err(MpcError::Config(format!(
                        "obstacle priorities must be a permutation of 0..{}",
                        self.obstacles.len()
                    )))
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MpcError {
    #[error("invalid scenario: {0}")]
    Config(String),
    #[error("ordering must be 1, 2 or 3, got {0}")]
    Ordering(usize),
    #[error("state became non-finite at t = {t:.2} s")]
    Diverged { t: f64 },
    #[error("solver failed at t = {t:.2} s: {source}")]
    Solve {
        t: f64,
        #[source]
        source: SolveError,
    },
}

/// `(A, B)` of `x' = A x + B u`.
pub fn continuous_model(p: &VehicleParams) -> (DMatrix<f64>, DMatrix<f64>) {
    let VehicleParams { v, c_alpha: c, m_mass: m, i_zz, l_f, l_r, .. } = *p;
    #[rustfmt::skip]
    let a = DMatrix::from_row_slice(4, 4, &[
        0.0, v,   v,                           0.0,
        0.0, 0.0, 0.0,                         1.0,
        0.0, 0.0, -2.0 * c / (m * v),          c * (l_r - l_f) / (m * v * v) - 1.0,
        0.0, 0.0, c * (l_r - l_f) / i_zz,      -c * (l_r * l_r + l_f * l_f) / (i_zz * v),
    ]);
    let b = DMatrix::from_column_slice(4, 1, &[0.0, 0.0, c / (m * v), c * l_f / i_zz]);
    (a, b)
}

/// Zero-order-hold discretization, read off the exponential of the
/// augmented matrix `[[A, B], [0, 0]] * ts`.
pub fn discretize(a: &DMatrix<f64>, b: &DMatrix<f64>, ts: f64) -> (DMatrix<f64>, DMatrix<f64>) {
    let (n, m) = (a.nrows(), b.ncols());
    let mut aug = DMatrix::zeros(n + m, n + m);
    aug.view_mut((0, 0), (n, n)).copy_from(&(a * ts));
    aug.view_mut((0, n), (n, m)).copy_from(&(b * ts));
    let e = aug.exp();
    (e.view((0, 0), (n, n)).into_owned(), e.view((0, n), (n, m)).into_owned())
}

/// Stacked predictions `x_k = Phi_k x0 + Gamma_k U` for `k = 1..=N`, block
/// `k - 1` of each matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub phi: DMatrix<f64>,
    pub gamma: DMatrix<f64>,
    nx: usize,
}

impl Prediction {
    pub fn horizon(&self) -> usize {
        self.phi.nrows() / self.nx
    }

    /// `Phi x0` stacked.
    pub fn free_response(&self, x0: &DVector<f64>) -> DVector<f64> {
        &self.phi * x0
    }

    /// Predicted `x_k` for `k = 1..=N`.
    pub fn state(&self, k: usize, x0: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        let rows = (k - 1) * self.nx;
        self.phi.rows(rows, self.nx) * x0 + self.gamma.rows(rows, self.nx) * u
    }
}

pub fn condense(ad: &DMatrix<f64>, bd: &DMatrix<f64>, horizon: usize) -> Prediction {
    let (nx, nu) = (ad.nrows(), bd.ncols());
    let mut phi = DMatrix::zeros(nx * horizon, nx);
    let mut gamma = DMatrix::zeros(nx * horizon, nu * horizon);
    // powers[j] = Ad^j B
    let mut power = DMatrix::identity(nx, nx);
    let mut ab = Vec::with_capacity(horizon);
    for k in 0..horizon {
        ab.push(&power * bd);
        power = ad * &power;
        phi.view_mut((k * nx, 0), (nx, nx)).copy_from(&power);
    }
    for k in 0..horizon {
        for j in 0..=k {
            gamma.view_mut((k * nx, j * nu), (nx, nu)).copy_from(&ab[k - j]);
        }
    }
    Prediction { phi, gamma, nx }
}

/// Obstacle indices from highest to lowest priority under the numbered
/// ordering. Ordering 1 uses the scenario ranks; orderings 2 and 3 shift
/// every rank by one and two places, cyclically.
pub fn ordering_permutation(obstacles: &[Obstacle], ordering: usize) -> Result<Vec<usize>, MpcError> {
    if !(1..=3).contains(&ordering) {
        return Err(MpcError::Ordering(ordering));
    }
    let n = obstacles.len();
    let mut perm = vec![0; n];
    for (i, o) in obstacles.iter().enumerate() {
        perm[(o.priority + ordering - 1) % n] = i;
    }
    Ok(perm)
}

const S: usize = 0;
const BETA: usize = 2;
const OMEGA: usize = 3;

/// Precomputed model and cost for one scenario.
#[derive(Debug, Clone)]
pub struct Controller {
    pub params: VehicleParams,
    pub cfg: MpcConfig,
    pub ad: DMatrix<f64>,
    pub bd: DMatrix<f64>,
    pub pred: Prediction,
    hess: DMatrix<f64>,
}

impl Controller {
    pub fn new(params: &VehicleParams, cfg: &MpcConfig) -> Self {
        let (a, b) = continuous_model(params);
        let (ad, bd) = discretize(&a, &b, cfg.ts);
        let pred = condense(&ad, &bd, cfg.horizon);
        let gs = pred.gamma.select_rows(&position_rows(cfg.horizon));
        let hess = (gs.transpose() * &gs) * cfg.q_s + DMatrix::identity(cfg.horizon, cfg.horizon) * cfg.r_u;
        Self { params: params.clone(), cfg: cfg.clone(), ad, bd, pred, hess }
    }

    /// Cost `1/2 U^T H U + f^T U` equal to `1/2 sum q s_k^2 + r u_k^2` up to
    /// a constant.
    pub fn objective(&self, x0: &DVector<f64>) -> (DMatrix<f64>, DVector<f64>) {
        let idx = position_rows(self.cfg.horizon);
        let gs = self.pred.gamma.select_rows(&idx);
        let s_free = self.pred.free_response(x0).select_rows(&idx);
        (self.hess.clone(), gs.transpose() * s_free * self.cfg.q_s)
    }

    /// Row `c . x_k` as an affine function `a . U + offset`; `k = 0` is the
    /// current state and does not depend on `U`.
    fn state_row(&self, k: usize, c: &[(usize, f64)], x0: &DVector<f64>) -> (DVector<f64>, f64) {
        let n = self.cfg.horizon;
        let mut a = DVector::zeros(n);
        let mut offset = 0.0;
        for &(j, w) in c {
            if k == 0 {
                offset += w * x0[j];
            } else {
                let r = (k - 1) * 4 + j;
                a += self.pred.gamma.row(r).transpose() * w;
                offset += w * self.pred.phi.row(r).dot(&x0.transpose());
            }
        }
        (a, offset)
    }

    /// The six-level hierarchy over `U` (three plus one level per obstacle).
    /// `ordering` lists obstacle indices from highest to lowest priority.
    pub fn hierarchy(&self, obstacles: &[Obstacle], ordering: &[usize], x0: &DVector<f64>, t_now: f64) -> Hierarchy {
        let n = self.cfg.horizon;
        let p = &self.params;
        let mut levels = Vec::with_capacity(3 + ordering.len());

        let p1 = Polyhedron::new(
            DMatrix::identity(n, n),
            DVector::from_element(n, -STEERING_LIMIT),
            DVector::from_element(n, STEERING_LIMIT),
        );
        levels.push(p1);

        // Front slip pairs u_k with x_k; rear slip has no input term, so its
        // rows start at x_1.
        let mut rows = Vec::with_capacity(2 * n);
        for k in 0..n {
            let (mut a, off) = self.state_row(k, &[(BETA, -1.0), (OMEGA, -p.l_f / p.v)], x0);
            a[k] += 1.0;
            rows.push((a, -SLIP_LIMIT - off, SLIP_LIMIT - off));
        }
        for k in 1..=n {
            let (a, off) = self.state_row(k, &[(OMEGA, p.l_r / p.v), (BETA, -1.0)], x0);
            rows.push((a, -SLIP_LIMIT - off, SLIP_LIMIT - off));
        }
        levels.push(stack_rows(n, rows));

        let half = p.w_road / 2.0;
        let rows = (1..=n)
            .map(|k| {
                let (a, off) = self.state_row(k, &[(S, 1.0)], x0);
                (a, -half - off, half - off)
            })
            .collect();
        levels.push(stack_rows(n, rows));

        for &i in ordering {
            let o = &obstacles[i];
            let rows = (1..=n)
                .filter(|&k| o.active_at(t_now + k as f64 * self.cfg.ts))
                .map(|k| {
                    let (a, off) = self.state_row(k, &[(S, 1.0)], x0);
                    (a, o.s_min - off, o.s_max - off)
                })
                .collect();
            levels.push(stack_rows(n, rows));
        }

        let levels = levels
            .into_iter()
            .map(|p| HierarchyLevel::new(p.expect("rows are built with matching shapes")))
            .collect();
        Hierarchy::new(levels, self.cfg.rho)
    }
}

fn position_rows(horizon: usize) -> Vec<usize> {
    (0..horizon).map(|k| k * 4 + S).collect()
}

fn stack_rows(n: usize, rows: Vec<(DVector<f64>, f64, f64)>) -> Result<Polyhedron, crate::error::ModelError> {
    let mut a = DMatrix::zeros(rows.len(), n);
    let mut lower = DVector::zeros(rows.len());
    let mut upper = DVector::zeros(rows.len());
    for (r, (row, lo, hi)) in rows.into_iter().enumerate() {
        a.row_mut(r).copy_from(&row.transpose());
        lower[r] = lo;
        upper[r] = hi;
    }
    Polyhedron::new(a, lower, upper)
}

/// One-shot form of [`Controller::hierarchy`].
pub fn build_hierarchy(
    cfg: &MpcConfig,
    params: &VehicleParams,
    obstacles: &[Obstacle],
    ordering: &[usize],
    x0: &DVector<f64>,
    t_now: f64,
) -> Hierarchy {
    Controller::new(params, cfg).hierarchy(obstacles, ordering, x0, t_now)
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub t: f64,
    /// State at `t`, before the input is applied.
    pub x: [f64; 4],
    pub delta_f: f64,
    /// Wall time of the prioritized intersection plus the objective stage.
    pub solve_time: f64,
    pub iterations: usize,
    /// Largest violation of each level's rows by the applied input sequence.
    pub violation: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Simulation {
    pub ordering: Vec<usize>,
    pub steps: Vec<StepRecord>,
}

impl Simulation {
    pub fn num_levels(&self) -> usize {
        self.steps.first().map_or(3 + self.ordering.len(), |s| s.violation.len())
    }

    pub fn median_solve_time(&self) -> f64 {
        let mut t: Vec<f64> = self.steps.iter().map(|s| s.solve_time).collect();
        if t.is_empty() {
            return 0.0;
        }
        t.sort_by(f64::total_cmp);
        let mid = t.len() / 2;
        if t.len() % 2 == 0 {
            0.5 * (t[mid - 1] + t[mid])
        } else {
            t[mid]
        }
    }

    pub fn write_trajectory_csv<W: Write>(&self, out: W) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(out);
        let mut header: Vec<String> =
            ["t", "s", "psi", "beta", "omega", "delta_f", "solve_time"].iter().map(|s| s.to_string()).collect();
        header.extend((1..=self.num_levels()).map(|i| format!("viol_p{i}")));
        w.write_record(&header)?;
        for s in &self.steps {
            let mut rec = vec![s.t, s.x[0], s.x[1], s.x[2], s.x[3], s.delta_f, s.solve_time];
            rec.extend(&s.violation);
            w.write_record(rec.iter().map(|v| format!("{v:e}")))?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_timing_csv<W: Write>(&self, out: W) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["t", "solve_time", "iterations"])?;
        for s in &self.steps {
            w.write_record([format!("{:e}", s.t), format!("{:e}", s.solve_time), s.iterations.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Closed-loop simulation under the numbered obstacle ordering (1, 2 or 3).
pub fn simulate(scenario: &Scenario, ordering: usize) -> Result<Simulation, MpcError> {
    scenario.validate()?;
    let perm = ordering_permutation(&scenario.obstacles, ordering)?;
    simulate_with(scenario, &perm)
}

/// Closed-loop simulation with an explicit priority permutation.
pub fn simulate_with(scenario: &Scenario, ordering: &[usize]) -> Result<Simulation, MpcError> {
    let ctrl = Controller::new(&scenario.vehicle, &scenario.mpc);
    let opts = HierarchyOptions::default();
    let ts = scenario.mpc.ts;
    let steps = (scenario.duration / ts).round() as usize;
    let mut x = DVector::from_row_slice(&scenario.x0);
    let mut records = Vec::with_capacity(steps);
    for step in 0..steps {
        let t = step as f64 * ts;
        let h = ctrl.hierarchy(&scenario.obstacles, ordering, &x, t);
        let (hess, lin) = ctrl.objective(&x);
        let start = Instant::now();
        let (u, sol) =
            solve_with_objective_with(&h, &hess, &lin, None, &opts).map_err(|source| MpcError::Solve { t, source })?;
        let solve_time = start.elapsed().as_secs_f64();
        let violation = h
            .levels
            .iter()
            .map(|l| l.poly.max_violation(&u).expect("dimensions agree"))
            .collect();
        records.push(StepRecord {
            t,
            x: [x[0], x[1], x[2], x[3]],
            delta_f: u[0],
            solve_time,
            iterations: sol.stats.total_iterations() + sol.stats.objective_iterations.unwrap_or(0),
            violation,
        });
        x = &ctrl.ad * &x + &ctrl.bd * u[0];
        if x.iter().any(|v| !v.is_finite()) {
            return Err(MpcError::Diverged { t });
        }
    }
    Ok(Simulation { ordering: ordering.to_vec(), steps: records })
}
