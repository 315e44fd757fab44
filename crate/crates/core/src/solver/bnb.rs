//! Branch-and-bound over bound fixings, shared by the 0-1 and the
//! complementarity searches.
//!
//! Nodes are explored best-bound first; after branching, the preferred child
//! is solved immediately (a plunge) from the parent's basis. The open set is
//! ordered by bound, then newest id first, so runs are reproducible.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::time::Instant;

use crate::lp::{LinearProgram, LpStatus};

use super::simplex::{Basis, SimplexEngine};
use super::{relative_gap, SolveOptions, SolveResult, SolveStatus, TracePoint};

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum Fix {
    Var { j: usize, lo: f64, hi: f64 },
    Surplus { row: usize, lo: f64, hi: f64 },
}

pub(crate) trait Brancher {
    /// Two children of a node with LP optimum `x`, preferred child first, or
    /// `None` when `x` already solves the original problem.
    fn branch(&self, x: &[f64]) -> Option<[Vec<Fix>; 2]>;

    /// Candidate feasible point derived from a node solution, with its
    /// objective. Only called on points `branch` rejected.
    fn heuristic(&mut self, _x: &[f64]) -> Option<(f64, Vec<f64>)> {
        None
    }
}

struct Node {
    id: usize,
    bound: f64,
    fixes: Vec<Fix>,
    basis: Option<Basis>,
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Node {}
impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Node {
    // max-heap: smaller bound ranks higher; among equal bounds the newest
    // (deepest) node, so ties do not degrade into breadth-first search
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .bound
            .total_cmp(&self.bound)
            .then_with(|| self.id.cmp(&other.id))
    }
}

struct Fixer {
    root_var: Vec<(f64, f64)>,
    touched_vars: Vec<usize>,
    touched_rows: Vec<usize>,
}

impl Fixer {
    fn apply(&mut self, engine: &mut SimplexEngine, fixes: &[Fix]) {
        for j in self.touched_vars.drain(..) {
            let (lo, hi) = self.root_var[j];
            engine.set_var_bounds(j, lo, hi);
        }
        for row in self.touched_rows.drain(..) {
            engine.set_surplus_bounds(row, 0.0, f64::INFINITY);
        }
        for f in fixes {
            match *f {
                Fix::Var { j, lo, hi } => {
                    let (cur_lo, cur_hi) = engine.var_bounds(j);
                    engine.set_var_bounds(j, cur_lo.max(lo), cur_hi.min(hi));
                    self.touched_vars.push(j);
                }
                Fix::Surplus { row, lo, hi } => {
                    let (cur_lo, cur_hi) = engine.surplus_bounds(row);
                    engine.set_surplus_bounds(row, cur_lo.max(lo), cur_hi.min(hi));
                    self.touched_rows.push(row);
                }
            }
        }
    }
}

fn prune_margin(incumbent: f64, opts: &SolveOptions) -> f64 {
    if !incumbent.is_finite() {
        return 0.0;
    }
    let scale = incumbent.abs().max(1.0);
    (opts.gap * scale).max(1e-9 * scale)
}

pub(crate) fn branch_and_bound(
    lp: &LinearProgram,
    brancher: &mut dyn Brancher,
    opts: &SolveOptions,
) -> SolveResult {
    let start = Instant::now();
    let mut engine = SimplexEngine::new(lp);
    let mut fixer = Fixer {
        root_var: lp.vars.iter().map(|v| (v.lower, v.upper)).collect(),
        touched_vars: Vec::new(),
        touched_rows: Vec::new(),
    };

    let mut incumbent: Option<Vec<f64>> = None;
    let mut best = f64::INFINITY;
    let mut open: BinaryHeap<Node> = BinaryHeap::new();
    let mut next_id = 1usize;
    let mut nodes = 0usize;
    let mut trace = Vec::new();
    let mut last_bound = f64::NEG_INFINITY;
    let mut limit_hit = false;
    let mut unbounded = false;
    // bounds of nodes whose LP could not be solved
    let mut failed_bound = f64::INFINITY;

    let mut current = Some(Node {
        id: 0,
        bound: f64::NEG_INFINITY,
        fixes: Vec::new(),
        basis: None,
    });

    loop {
        let node = match current.take() {
            Some(n) => n,
            None => match open.pop() {
                Some(n) => n,
                None => break,
            },
        };
        if node.bound >= best - prune_margin(best, opts) {
            continue;
        }
        let out_of_time = opts.time_limit.is_some_and(|t| start.elapsed() >= t);
        if nodes >= opts.node_limit || out_of_time {
            open.push(node);
            limit_hit = true;
            break;
        }
        nodes += 1;

        fixer.apply(&mut engine, &node.fixes);
        match &node.basis {
            Some(b) => engine.restore(b),
            None => engine.reset_basis(),
        }
        let mut status = engine.solve(opts);
        if matches!(status, LpStatus::NumericalFailure | LpStatus::IterationLimit) {
            // retry cold before giving up on the node
            engine.reset_basis();
            status = engine.solve(opts);
        }

        let mut children: Option<(f64, [Vec<Fix>; 2], Basis)> = None;
        match status {
            LpStatus::Optimal => {
                let value = engine.objective();
                if value < best - prune_margin(best, opts) {
                    let x: Vec<f64> = (0..lp.num_vars()).map(|j| engine.value(j)).collect();
                    match brancher.branch(&x) {
                        None => {
                            best = value;
                            incumbent = Some(x);
                        }
                        Some(kids) => {
                            if let Some((h_val, h_x)) = brancher.heuristic(&x) {
                                if h_val < best {
                                    best = h_val;
                                    incumbent = Some(h_x);
                                }
                            }
                            children = Some((value, kids, engine.snapshot()));
                        }
                    }
                }
            }
            LpStatus::Infeasible => {}
            LpStatus::Unbounded => {
                if node.id == 0 {
                    unbounded = true;
                    break;
                }
            }
            LpStatus::IterationLimit | LpStatus::NumericalFailure => {
                // keep the node's bound alive so the result cannot claim optimality
                limit_hit = true;
                failed_bound = failed_bound.min(node.bound);
            }
        }

        if let Some((value, [first, second], basis)) = children {
            if value < best - prune_margin(best, opts) {
                let make = |extra: Vec<Fix>, id: usize| {
                    let mut fixes = node.fixes.clone();
                    fixes.extend(extra);
                    Node {
                        id,
                        bound: value,
                        fixes,
                        basis: Some(basis.clone()),
                    }
                };
                open.push(make(second, next_id + 1));
                current = Some(make(first, next_id));
                next_id += 2;
            }
        }

        let open_min = open
            .peek()
            .map_or(f64::INFINITY, |n| n.bound)
            .min(current.as_ref().map_or(f64::INFINITY, |n| n.bound));
        let bound = open_min.min(best).min(failed_bound);
        last_bound = last_bound.max(bound);
        trace.push(TracePoint {
            node: nodes,
            bound: last_bound,
            incumbent: best,
        });
        if incumbent.is_some() && relative_gap(best, last_bound) <= opts.gap && opts.gap > 0.0 {
            break;
        }
    }

    let wall_time = start.elapsed();
    if unbounded {
        return SolveResult {
            status: SolveStatus::Unbounded,
            incumbent: None,
            objective: f64::INFINITY,
            best_bound: f64::NEG_INFINITY,
            gap: f64::INFINITY,
            nodes,
            wall_time,
            duals: None,
            trace,
        };
    }
    let remaining = open
        .iter()
        .map(|n| n.bound)
        .chain(current.as_ref().map(|n| n.bound))
        .filter(|&b| b < best - prune_margin(best, opts))
        .fold(f64::INFINITY, f64::min);
    let best_bound = remaining.min(failed_bound).min(best);
    let status = if limit_hit && relative_gap(best, best_bound) > opts.gap {
        SolveStatus::LimitHit
    } else if incumbent.is_some() {
        SolveStatus::Optimal
    } else if limit_hit {
        SolveStatus::LimitHit
    } else {
        SolveStatus::Infeasible
    };
    SolveResult {
        status,
        gap: relative_gap(best, best_bound),
        objective: best,
        best_bound,
        incumbent,
        nodes,
        wall_time,
        duals: None,
        trace,
    }
}
