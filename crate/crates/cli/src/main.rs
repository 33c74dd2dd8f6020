//! `hqp` command-line tool.
//!
//! Exit codes: 0 success, 1 parse or usage error (no output written),
//! 2 infeasible hard level, 3 any other solver failure.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use hqp::harness::{self, BenchConfig};
use hqp::io::{parse_hierarchy, write_solution};
use hqp::mpc::{self, MpcError, Scenario};
use hqp::SolveError;

#[derive(Parser)]
#[command(name = "hqp", version, about = "Prioritized intersections of polyhedra")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve a hierarchy file and write the solution.
    Solve {
        file: PathBuf,
        /// Solution file; standard output when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the random-instance benchmark and write a CSV report.
    Bench {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_delimiter = ',', default_values_t = [0.0, 0.25, 0.5, 0.75, 1.0])]
        sigma_grid: Vec<f64>,
        #[arg(long, default_value_t = 100)]
        reps: usize,
        #[arg(long, default_value_t = 50)]
        nz: usize,
        #[arg(long, default_value_t = 10)]
        p: usize,
        #[arg(long, default_value_t = harness::GEN_RHO)]
        rho: f64,
        /// CSV report; standard output when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Simulate the lane-keeping MPC scenario.
    Mpc {
        /// Scenario TOML; the built-in three-obstacle scenario when omitted.
        scenario: Option<PathBuf>,
        #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u8).range(1..=3))]
        ordering: u8,
        /// Trajectory CSV; standard output when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Per-step timing CSV.
        #[arg(long)]
        timing: Option<PathBuf>,
    },
}

struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Self {
        Failure { code: 1, message: message.into() }
    }
}

impl From<SolveError> for Failure {
    fn from(e: SolveError) -> Self {
        let code = match e {
            SolveError::InfeasibleHardLevel => 2,
            SolveError::InvalidHierarchy(_) => 1,
            _ => 3,
        };
        Failure { code, message: e.to_string() }
    }
}

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure::usage(format!("{}: {e}", path.display())))
}

fn emit(out: Option<&Path>, bytes: &[u8]) -> Result<(), Failure> {
    let res = match out {
        Some(path) => fs::write(path, bytes).map_err(|e| format!("{}: {e}", path.display())),
        None => io::stdout().write_all(bytes).map_err(|e| e.to_string()),
    };
    res.map_err(Failure::usage)
}

fn cmd_solve(file: &Path, out: Option<&Path>) -> Result<(), Failure> {
    let text = read(file)?;
    let parsed = parse_hierarchy(&text).map_err(|e| Failure::usage(format!("{}:{}:{}: {}", file.display(), e.line, e.column, e.message)))?;
    let h = &parsed.hierarchy;
    for d in h.validate() {
        eprintln!("warning: {d}");
    }
    let (u, sol) = match &parsed.objective {
        Some(obj) => {
            let (u, sol) = hqp::solve_with_objective(h, &obj.hess, &obj.lin, None)?;
            (Some(u), sol)
        }
        None => (None, hqp::prioritized_intersection(h, None)?),
    };
    emit(out, write_solution(h, &sol, u.as_ref()).as_bytes())
}

fn cmd_bench(cfg: &BenchConfig, out: Option<&Path>) -> Result<(), Failure> {
    for &sigma in &cfg.sigma_grid {
        cfg.gen_config(sigma, 0).validate().map_err(Failure::usage)?;
    }
    let rows = harness::run_benchmark(cfg)?;
    let mut buf = Vec::new();
    harness::write_bench_csv(&rows, &mut buf).map_err(|e| Failure { code: 3, message: e.to_string() })?;
    emit(out, &buf)
}

fn cmd_mpc(scenario: Option<&Path>, ordering: usize, out: Option<&Path>, timing: Option<&Path>) -> Result<(), Failure> {
    let sc: Scenario = match scenario {
        Some(path) => toml::from_str(&read(path)?).map_err(|e| Failure::usage(format!("{}: {e}", path.display())))?,
        None => Scenario::three_obstacles(),
    };
    let sim = mpc::simulate(&sc, ordering).map_err(|e| match e {
        MpcError::Config(_) | MpcError::Ordering(_) => Failure::usage(e.to_string()),
        MpcError::Solve { source: SolveError::InfeasibleHardLevel, .. } => Failure { code: 2, message: e.to_string() },
        _ => Failure { code: 3, message: e.to_string() },
    })?;
    let mut traj = Vec::new();
    sim.write_trajectory_csv(&mut traj).map_err(|e| Failure { code: 3, message: e.to_string() })?;
    let mut times = Vec::new();
    sim.write_timing_csv(&mut times).map_err(|e| Failure { code: 3, message: e.to_string() })?;
    emit(out, &traj)?;
    if let Some(path) = timing {
        emit(Some(path), &times)?;
    }
    eprintln!("median solve time: {:.3} ms over {} steps", sim.median_solve_time() * 1e3, sim.steps.len());
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let res = match cli.command {
        Command::Solve { file, out } => cmd_solve(&file, out.as_deref()),
        Command::Bench { seed, sigma_grid, reps, nz, p, rho, out } => {
            // Keeping m_i <= n_z keeps every generated level nonempty.
            let m_max = BenchConfig::default().m_max.min(nz);
            let cfg = BenchConfig { seed, sigma_grid, reps, n_z: nz, p, rho, m_max, ..BenchConfig::default() };
            cmd_bench(&cfg, out.as_deref())
        }
        Command::Mpc { scenario, ordering, out, timing } => {
            cmd_mpc(scenario.as_deref(), ordering as usize, out.as_deref(), timing.as_deref())
        }
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
