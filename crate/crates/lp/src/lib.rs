//! A small, deterministic linear-program solver.
//!
//! Programs are stated in maximization form with non-negative lower bounds.
//! The solver is a two-phase revised simplex with fixed, index-based
//! tie-breaking, so repeated calls on the same input return the same vertex
//! bit for bit.

mod lu;
mod program;
mod simplex;

pub use program::{Bound, Constraint, LinearProgram, Relation};
pub use simplex::{solve, FEAS_TOL, OPT_TOL, PIVOT_TOL};

use thiserror::Error;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Status {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LpSolution {
    pub status: Status,
    /// One value per variable. Lower bounds when the program is infeasible.
    pub x: Vec<f64>,
    /// `-inf` when infeasible, `+inf` when unbounded.
    pub objective_value: f64,
    /// Simplex pivots over both phases.
    pub iterations: usize,
}

impl LpSolution {
    pub fn is_optimal(&self) -> bool {
        self.status == Status::Optimal
    }
}

#[derive(Clone, Debug, Error, PartialEq)]
pub enum LpError {
    #[error("malformed program: {0}")]
    Malformed(String),
    #[error("expected a point of dimension {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("simplex did not terminate within {0} pivots")]
    IterationLimit(usize),
}
