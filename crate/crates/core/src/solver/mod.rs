//! Embedded numerical engines: primal simplex for LPs, branch-and-bound over
//! 0-1 selectors for the big-M MILP, complementarity branching for the MPEC,
//! and fixed-format MPS export for external solvers.

mod bnb;
mod cuts;
mod extract;
mod heuristic;
mod lpcc;
mod milp;
pub mod mps;
pub mod simplex;

use std::time::Duration;

use serde::{Deserialize, Serialize};

pub use cuts::{value_function, with_value_cuts, StrengthenedModel, ValueFunction, WeightSet};
pub use extract::{extract_solution, DualRecord, ExtractedSolution};
pub use lpcc::solve_lpcc;
pub use milp::{solve_bigm_with_escalation, solve_milp, BigMRun};
pub use mps::export_mps;
pub use simplex::{solve_lp, Basis, SimplexEngine};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Branching {
    MostFractional,
    MostViolatedComplementarity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveOptions {
    pub feasibility_tol: f64,
    pub optimality_tol: f64,
    /// Relative gap at which branch-and-bound stops.
    pub gap: f64,
    pub node_limit: usize,
    pub time_limit: Option<Duration>,
    pub branching: Branching,
    pub anti_cycling: bool,
    pub max_lp_iterations: Option<usize>,
    /// Strengthen bilevel models with each party's optimal-value function
    /// before branching.
    pub value_cuts: bool,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            feasibility_tol: 1e-7,
            optimality_tol: 1e-7,
            gap: 0.0,
            node_limit: 1_000_000,
            time_limit: None,
            branching: Branching::MostViolatedComplementarity,
            anti_cycling: true,
            max_lp_iterations: None,
            value_cuts: true,
        }
    }
}

impl SolveOptions {
    pub fn check(&self) -> crate::Result<()> {
        if !(self.feasibility_tol > 0.0 && self.optimality_tol > 0.0 && self.gap >= 0.0) {
            return Err(crate::Error::InvalidArgument(
                "tolerances must be positive".into(),
            ));
        }
        if self.node_limit < 1 || self.time_limit.is_some_and(|t| t.is_zero()) {
            return Err(crate::Error::InvalidArgument("limits must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    Unbounded,
    LimitHit,
}

impl SolveStatus {
    /// Process exit code used by the command-line front end.
    pub fn exit_code(self) -> i32 {
        match self {
            SolveStatus::Optimal => 0,
            SolveStatus::Infeasible => 2,
            SolveStatus::Unbounded => 3,
            SolveStatus::LimitHit => 4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub node: usize,
    pub bound: f64,
    pub incumbent: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveResult {
    pub status: SolveStatus,
    pub incumbent: Option<Vec<f64>>,
    /// Objective of the incumbent, `+inf` without one.
    pub objective: f64,
    pub best_bound: f64,
    pub gap: f64,
    pub nodes: usize,
    pub wall_time: Duration,
    /// Row multipliers `(omega, v)` when the model was a plain LP.
    pub duals: Option<(Vec<f64>, Vec<f64>)>,
    /// Bound and incumbent after every processed node.
    pub trace: Vec<TracePoint>,
}

impl SolveResult {
    pub fn has_incumbent(&self) -> bool {
        self.incumbent.is_some()
    }
}

pub(crate) fn relative_gap(incumbent: f64, bound: f64) -> f64 {
    if !incumbent.is_finite() {
        return f64::INFINITY;
    }
    if !bound.is_finite() {
        return f64::INFINITY;
    }
    ((incumbent - bound).max(0.0)) / incumbent.abs().max(1.0)
}
