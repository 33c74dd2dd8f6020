//! Prioritized intersections of polyhedra.
//!
//! Given an ordered list of polyhedral constraint sets, the prioritized
//! intersection keeps the highest-priority set exact and relaxes each lower
//! level by the smallest weighted perturbation that keeps it compatible with
//! everything above it. The perturbations are computed level by level with a
//! dual active-set least-distance solver that handles the slack variables
//! implicitly and warm-starts each level from the previous one.
//!
//! Modules:
//! - [`model`]: polyhedra, hierarchy levels and the violation function.
//! - [`factorization`]: incrementally updated `L D L^T` of the working-set
//!   Gram matrix.
//! - [`solver`]: the single-level dual active-set method.
//! - [`hierarchy`]: the sequential solve and the optional objective stage.
//! - [`oracle`]: slow reference solvers for validation.
//! - [`harness`]: random instance generation and benchmarking.
//! - [`mpc`]: bicycle-model MPC with prioritized constraints.
//! - [`io`]: text formats for hierarchies and solutions.

pub mod error;
pub mod factorization;
pub mod harness;
pub mod hierarchy;
pub mod io;
pub mod model;
pub mod mpc;
pub mod oracle;
pub mod solver;

pub use error::{FactorError, ModelError, SolveError};
pub use hierarchy::{
    pcap_pair, prioritized_intersection, prioritized_intersection_with, solve_with_objective,
    solve_with_objective_with,
    HierarchyOptions, HierarchySolution,
};
pub use model::{Hierarchy, HierarchyLevel, Polyhedron, Side};
pub use solver::{solve_level, LevelProblem, SolverSettings, WorkingSet};
