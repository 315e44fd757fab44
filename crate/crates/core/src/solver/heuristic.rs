//! Primal heuristic for the MPEC searches: read the division off a node
//! relaxation, let the lower level respond to it, and lift the response into
//! a complementarity-feasible MPEC point.

use std::collections::HashSet;

use crate::instance::Division;
use crate::lp::evaluate;
use crate::mpec::MpecModel;
use crate::response::respond;

use super::cuts::WeightSet;
use super::SolveOptions;

const ACCEPT_TOL: f64 = 1e-6;

pub(crate) struct BilevelHeuristic<'a> {
    mpec: &'a MpecModel,
    sets: &'a [WeightSet],
    opts: SolveOptions,
    tried: HashSet<Vec<i64>>,
}

impl<'a> BilevelHeuristic<'a> {
    /// `sets` are the interpolation weights of a strengthened `mpec`, filled
    /// in on every candidate.
    pub(crate) fn new(mpec: &'a MpecModel, sets: &'a [WeightSet], opts: &SolveOptions) -> Self {
        BilevelHeuristic {
            mpec,
            sets,
            opts: SolveOptions {
                time_limit: None,
                ..opts.clone()
            },
            tried: HashSet::new(),
        }
    }

    /// Division read from `x`, clamped to the share bounds and scaled back
    /// into the total when rounding pushed it over.
    fn division(&self, x: &[f64]) -> Division {
        let lp = &self.mpec.lp;
        let clamp = |j: usize| x[j].clamp(lp.vars[j].lower, lp.vars[j].upper);
        let mut div = Division {
            s_disco: clamp(self.mpec.s_disco),
            s_customer: self.mpec.s_customer.iter().map(|&j| clamp(j)).collect(),
        };
        let total = self.mpec.instance.storage.total_capacity;
        let excess = div.total() - total;
        if excess > 0.0 {
            let free: Vec<usize> = std::iter::once(self.mpec.s_disco)
                .chain(self.mpec.s_customer.iter().copied())
                .filter(|&j| lp.vars[j].lower < lp.vars[j].upper)
                .collect();
            let movable: f64 = free.iter().map(|&j| clamp(j) - lp.vars[j].lower).sum();
            if movable > 0.0 {
                let keep = (1.0 - excess / movable).max(0.0);
                let shrink = |j: usize, v: f64| lp.vars[j].lower + (v - lp.vars[j].lower) * keep;
                if free.contains(&self.mpec.s_disco) {
                    div.s_disco = shrink(self.mpec.s_disco, div.s_disco);
                }
                for (k, &j) in self.mpec.s_customer.iter().enumerate() {
                    if free.contains(&j) {
                        div.s_customer[k] = shrink(j, div.s_customer[k]);
                    }
                }
            }
        }
        div
    }

    /// MPEC point and objective for the division suggested by `x`, if the
    /// division is new and the lifted point checks out.
    pub(crate) fn mpec_candidate(&mut self, x: &[f64]) -> Option<(f64, Vec<f64>)> {
        let div = self.division(x);
        let key: Vec<i64> = std::iter::once(div.s_disco)
            .chain(div.s_customer.iter().copied())
            .map(|v| (v * 1e9).round() as i64)
            .collect();
        if !self.tried.insert(key) {
            return None;
        }
        let response = respond(&self.mpec.instance, &div, &self.opts).ok()?;
        let mut point = self.mpec.point_from_response(&response);
        for set in self.sets {
            set.lift(&mut point);
        }
        let e = evaluate(&self.mpec.lp, &point).ok()?;
        let bounds_ok = self
            .mpec
            .lp
            .vars
            .iter()
            .zip(&point)
            .all(|(v, &p)| p >= v.lower - ACCEPT_TOL && p <= v.upper + ACCEPT_TOL);
        let ok = bounds_ok
            && e.min_g >= -ACCEPT_TOL
            && e.max_abs_h <= ACCEPT_TOL
            && self.mpec.complementarity_violation(&point) <= ACCEPT_TOL;
        ok.then_some((e.objective, point))
    }
}
