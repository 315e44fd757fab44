//! LP-based branch-and-bound over 0-1 variables, and the big-M pipeline with
//! dual polishing and constant escalation.

use crate::error::{Error, Result};
use crate::lp::{evaluate, LinearProgram, LpStatus, VarRole};
use crate::mpec::{linearize_big_m, validate_big_m, BigMPolicy, BigMReport, MilpModel, MpecModel};

use super::cuts::{strengthened, weight_branch, WeightSet};
use super::bnb::{branch_and_bound, Brancher, Fix};
use super::heuristic::BilevelHeuristic;
use super::simplex::solve_lp;
use super::{Branching, SolveOptions, SolveResult, SolveStatus};

/// Distance from 0 or 1 below which a binary counts as integral.
const INTEGRALITY_TOL: f64 = 1e-9;
const ACCEPT_TOL: f64 = 1e-6;

struct BinaryBrancher<'a> {
    milp: &'a MilpModel,
    rule: Branching,
    sets: &'a [WeightSet],
    heuristic: Option<BilevelHeuristic<'a>>,
}

impl BinaryBrancher<'_> {
    fn children(j: usize, up_first: bool) -> [Vec<Fix>; 2] {
        let down = vec![Fix::Var { j, lo: 0.0, hi: 0.0 }];
        let up = vec![Fix::Var { j, lo: 1.0, hi: 1.0 }];
        if up_first {
            [up, down]
        } else {
            [down, up]
        }
    }
}

impl Brancher for BinaryBrancher<'_> {
    fn branch(&self, x: &[f64]) -> Option<[Vec<Fix>; 2]> {
        if let Some(kids) = weight_branch(self.sets, x) {
            return Some(kids);
        }
        let fractional = |j: usize| {
            let f = x[j] - x[j].floor();
            f.min(1.0 - f)
        };
        if self.rule == Branching::MostViolatedComplementarity && !self.milp.big_m.is_empty() {
            let mut worst: Option<(usize, f64, bool)> = None;
            for rec in &self.milp.big_m {
                if fractional(rec.selector) <= INTEGRALITY_TOL {
                    continue;
                }
                let w = x[rec.dual_var].max(0.0);
                let g = self.milp.lp.inequalities[rec.row].residual(x).max(0.0);
                let score = w * g;
                if worst.is_none_or(|(_, best, _)| score > best) {
                    // u = 1 lets the multiplier live and forces the slack to zero
                    worst = Some((rec.selector, score, g <= w));
                }
            }
            if let Some((j, _, up_first)) = worst {
                return Some(Self::children(j, up_first));
            }
        }
        let mut pick: Option<(usize, f64)> = None;
        for &j in &self.milp.binaries {
            let f = fractional(j);
            if f > INTEGRALITY_TOL && pick.is_none_or(|(_, best)| f > best) {
                pick = Some((j, f));
            }
        }
        let (j, _) = pick?;
        Some(Self::children(j, x[j] >= 0.5))
    }

    fn heuristic(&mut self, x: &[f64]) -> Option<(f64, Vec<f64>)> {
        let h = self.heuristic.as_mut()?;
        let (_, mut point) = h.mpec_candidate(x)?;
        point.resize(self.milp.lp.num_vars(), 0.0);
        for rec in &self.milp.big_m {
            let w = point[rec.dual_var];
            let g = self.milp.lp.inequalities[rec.row].residual(&point);
            point[rec.selector] = if g <= w { 1.0 } else { 0.0 };
        }
        let e = evaluate(&self.milp.lp, &point).ok()?;
        (e.min_g >= -ACCEPT_TOL && e.max_abs_h <= ACCEPT_TOL).then_some((e.objective, point))
    }
}

fn run<'a>(
    milp: &'a MilpModel,
    sets: &'a [WeightSet],
    heuristic: Option<BilevelHeuristic<'a>>,
    opts: &SolveOptions,
) -> SolveResult {
    if milp.binaries.is_empty() {
        return lp_result(&milp.lp, opts);
    }
    let mut brancher = BinaryBrancher {
        milp,
        rule: opts.branching,
        sets,
        heuristic,
    };
    branch_and_bound(&milp.lp, &mut brancher, opts)
}

fn lp_result(lp: &LinearProgram, opts: &SolveOptions) -> SolveResult {
    let start = std::time::Instant::now();
    let sol = solve_lp(lp, opts);
    let status = match sol.status {
        LpStatus::Optimal => SolveStatus::Optimal,
        LpStatus::Infeasible => SolveStatus::Infeasible,
        LpStatus::Unbounded => SolveStatus::Unbounded,
        LpStatus::IterationLimit | LpStatus::NumericalFailure => SolveStatus::LimitHit,
    };
    let optimal = status == SolveStatus::Optimal;
    SolveResult {
        status,
        objective: if optimal { sol.objective } else { f64::INFINITY },
        best_bound: if optimal { sol.objective } else { f64::NEG_INFINITY },
        gap: if optimal { 0.0 } else { f64::INFINITY },
        incumbent: optimal.then(|| sol.x.clone()),
        nodes: 1,
        wall_time: start.elapsed(),
        duals: optimal.then(|| (sol.omega, sol.v)),
        trace: Vec::new(),
    }
}

/// Branch-and-bound on a mixed 0-1 program.
pub fn solve_milp(milp: &MilpModel, opts: &SolveOptions) -> SolveResult {
    run(milp, &[], None, opts)
}

/// Outcome of the big-M pipeline.
#[derive(Debug, Clone)]
pub struct BigMRun {
    /// Result of the last round; the incumbent is a point of `milp.lp`, whose
    /// leading columns are those of the MPEC.
    pub result: SolveResult,
    pub milp: MilpModel,
    pub report: BigMReport,
    /// Dual constant used in each round.
    pub dual_m: Vec<f64>,
}

/// Re-solves the multipliers with everything else held at `point`,
/// minimising their sum so none of them sits on a constant needlessly.
fn polish_duals(milp: &MilpModel, point: &[f64], opts: &SolveOptions) -> Option<Vec<f64>> {
    let mut lp = milp.lp.clone();
    for (j, var) in lp.vars.iter_mut().enumerate() {
        match var.role {
            VarRole::IneqDual { .. } | VarRole::EqDual { .. } => {}
            _ => {
                var.lower = point[j];
                var.upper = point[j];
            }
        }
    }
    for (j, c) in lp.objective.iter_mut().enumerate() {
        *c = if matches!(lp.vars[j].role, VarRole::IneqDual { .. }) {
            1.0
        } else {
            0.0
        };
    }
    lp.objective_offset = 0.0;
    let sol = solve_lp(&lp, opts);
    if sol.status != LpStatus::Optimal {
        return None;
    }
    let e = evaluate(&milp.lp, &sol.x).ok()?;
    (e.min_g >= -ACCEPT_TOL && e.max_abs_h <= ACCEPT_TOL).then_some(sol.x)
}

/// Linearises `mpec`, solves the MILP, and escalates the guessed constants
/// while any of them binds, up to the policy's round limit.
pub fn solve_bigm_with_escalation(
    mpec: &MpecModel,
    policy: &BigMPolicy,
    opts: &SolveOptions,
) -> Result<BigMRun> {
    opts.check()?;
    let strong = strengthened(mpec, opts);
    let model = &strong.model;
    let mut policy = *policy;
    let mut dual_m = Vec::new();
    let mut round = 0;
    loop {
        let milp = linearize_big_m(model, &policy)?;
        dual_m.push(policy.dual_constant(&mpec.instance));
        let heuristic = BilevelHeuristic::new(model, &strong.sets, opts);
        let mut result = run(&milp, &strong.sets, Some(heuristic), opts);
        let mut report = BigMReport::default();
        if let Some(x) = result.incumbent.as_mut() {
            if let Some(polished) = polish_duals(&milp, x, opts) {
                *x = polished;
            }
            report = validate_big_m(&milp, x, 1e-6);
        }
        let retry = result.status == SolveStatus::Optimal
            && !report.certifies()
            && round < policy.max_rounds;
        // an infeasible MILP can also be an artefact of a small constant
        let retry = retry || (result.status == SolveStatus::Infeasible && round < policy.max_rounds);
        if !retry {
            return Ok(BigMRun {
                result,
                milp,
                report,
                dual_m,
            });
        }
        round += 1;
        policy = policy.escalated(&mpec.instance);
    }
}

impl BigMRun {
    /// Fails unless the run ended optimal with no binding constant.
    pub fn certified(&self) -> Result<&[f64]> {
        let x = self
            .result
            .incumbent
            .as_deref()
            .ok_or_else(|| Error::Solver(format!("big-M run ended {:?}", self.result.status)))?;
        if !self.report.certifies() {
            return Err(Error::Verification(format!(
                "{} big-M constants still bind after escalation",
                self.report.binding.len()
            )));
        }
        Ok(x)
    }
}
