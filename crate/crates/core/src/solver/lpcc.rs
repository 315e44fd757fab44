//! Complementarity branching: every node drops the pairs it has not decided
//! yet, and the most violated pair (largest `omega_i * g_i`) splits the node
//! into `omega_i = 0` and `g_i = 0`. Value-function weights are made
//! adjacent first.

use crate::mpec::MpecModel;

use super::cuts::{strengthened, weight_branch, WeightSet};
use super::bnb::{branch_and_bound, Brancher, Fix};
use super::heuristic::BilevelHeuristic;
use super::{SolveOptions, SolveResult};

/// Products below this count as complementary.
pub(crate) const PRODUCT_TOL: f64 = 1e-9;

struct PairBrancher<'a> {
    mpec: &'a MpecModel,
    sets: &'a [WeightSet],
    heuristic: BilevelHeuristic<'a>,
}

impl Brancher for PairBrancher<'_> {
    fn branch(&self, x: &[f64]) -> Option<[Vec<Fix>; 2]> {
        if let Some(kids) = weight_branch(self.sets, x) {
            return Some(kids);
        }
        let mut worst: Option<(usize, f64, f64, f64)> = None;
        for (k, p) in self.mpec.pairs.iter().enumerate() {
            let w = x[p.dual_var].max(0.0);
            let g = self.mpec.lp.inequalities[p.row].residual(x).max(0.0);
            let product = w * g;
            if product > PRODUCT_TOL && worst.is_none_or(|(_, best, _, _)| product > best) {
                worst = Some((k, product, w, g));
            }
        }
        let (k, _, w, g) = worst?;
        let p = self.mpec.pairs[k];
        let dual_zero = vec![Fix::Var {
            j: p.dual_var,
            lo: 0.0,
            hi: 0.0,
        }];
        let slack_zero = vec![Fix::Surplus {
            row: p.row,
            lo: 0.0,
            hi: 0.0,
        }];
        // first zero out the side that is already closer to zero
        Some(if w <= g {
            [dual_zero, slack_zero]
        } else {
            [slack_zero, dual_zero]
        })
    }

    fn heuristic(&mut self, x: &[f64]) -> Option<(f64, Vec<f64>)> {
        self.heuristic.mpec_candidate(x)
    }
}

/// Solves the MPEC by complementarity branching. The incumbent is a point of
/// `mpec.lp`.
pub fn solve_lpcc(mpec: &MpecModel, opts: &SolveOptions) -> SolveResult {
    let strong = strengthened(mpec, opts);
    let mut brancher = PairBrancher {
        mpec: &strong.model,
        sets: &strong.sets,
        heuristic: BilevelHeuristic::new(&strong.model, &strong.sets, opts),
    };
    let mut result = branch_and_bound(&strong.model.lp, &mut brancher, opts);
    if let Some(x) = result.incumbent.as_mut() {
        x.truncate(strong.base_vars);
    }
    result
}
