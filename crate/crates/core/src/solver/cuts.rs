//! Value-function strengthening.
//!
//! Capacity enters each operation model only through the right-hand side,
//! so the party's optimal value `v(S)` is convex and piecewise linear in its
//! share `S`. Its breakpoints are found exactly from tangent intersections,
//! and the bilevel model gains, per party, interpolation weights `lambda_k`
//! over the breakpoints `p_k` with
//!
//! ```text
//! sum lambda_k = 1,   S = sum p_k lambda_k,   c x + offset <= sum v(p_k) lambda_k
//! ```
//!
//! Any optimal lower-level schedule satisfies these rows. Without further
//! restriction the last row is only the secant over the whole share range;
//! once at most two adjacent weights are positive it is `c x <= v(S)`, and
//! the schedule is optimal for its owner. The branching engines enforce that
//! adjacency by splitting the breakpoint list before they touch
//! complementarity.

use crate::error::{Error, Result};
use crate::instance::Instance;
use crate::lp::{build_llm_c, build_llm_d, LpStatus, Owner, RowTag, VarRole, Variable};
use crate::mpec::MpecModel;
use crate::response::pin_slack;

use super::bnb::Fix;
use super::simplex::solve_lp;
use super::SolveOptions;

/// Evaluations per party before the breakpoint search gives up on exactness.
const MAX_EVALUATIONS: usize = 400;
/// Weights below this count as zero when checking adjacency.
const WEIGHT_TOL: f64 = 1e-9;

/// Optimal operating cost of one party as a function of its share, sampled
/// at `points` (increasing). The linear interpolant never underestimates
/// the true function; with `exact` set it equals it.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueFunction {
    pub owner: Owner,
    pub points: Vec<f64>,
    pub values: Vec<f64>,
    pub exact: bool,
}

impl ValueFunction {
    /// Segment `k` with `points[k] <= s <= points[k + 1]` and the weight of
    /// its right end, for `s` clamped into the sampled range.
    fn segment(&self, s: f64) -> (usize, f64) {
        let last = self.points.len() - 1;
        if last == 0 {
            return (0, 0.0);
        }
        let s = s.clamp(self.points[0], self.points[last]);
        let k = self.points[1..last].partition_point(|&p| p <= s);
        let width = self.points[k + 1] - self.points[k];
        (k, ((s - self.points[k]) / width).clamp(0.0, 1.0))
    }

    pub fn interpolate(&self, s: f64) -> f64 {
        let (k, theta) = self.segment(s);
        if self.points.len() == 1 {
            return self.values[0];
        }
        (1.0 - theta) * self.values[k] + theta * self.values[k + 1]
    }

    /// Largest absolute sampled value, for tolerances.
    fn scale(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }
}

#[derive(Debug, Clone, Copy)]
struct Sample {
    s: f64,
    value: f64,
    slope: f64,
}

fn sample(instance: &Instance, owner: Owner, s: f64, opts: &SolveOptions) -> Result<Sample> {
    let lp = match owner {
        Owner::Customer(n) => build_llm_c(instance, n, s)?,
        Owner::Disco => build_llm_d(instance, s)?,
    };
    let sol = solve_lp(&lp, opts);
    if sol.status != LpStatus::Optimal {
        return Err(Error::Solver(format!(
            "operation model of {owner} ended {:?} at capacity {s}",
            sol.status
        )));
    }
    // d v / d rhs_i = omega_i and rhs_i = base + per_capacity * s
    let slope = lp
        .capacity_markers
        .iter()
        .map(|m| sol.omega[m.row] * m.per_capacity)
        .sum();
    Ok(Sample {
        s,
        value: sol.objective,
        slope,
    })
}

/// Optimal-value function of `owner` over shares `[lo, hi]`.
///
/// Tangents at the ends of an interval meet at `c`; if `v(c)` lies on them,
/// `v` is their maximum on the interval and `c` is its only breakpoint there,
/// otherwise both halves are searched again.
pub fn value_function(
    instance: &Instance,
    owner: Owner,
    lo: f64,
    hi: f64,
    opts: &SolveOptions,
) -> Result<ValueFunction> {
    let first = sample(instance, owner, lo, opts)?;
    if hi - lo <= 1e-12 {
        return Ok(ValueFunction {
            owner,
            points: vec![lo],
            values: vec![first.value],
            exact: true,
        });
    }
    let last = sample(instance, owner, hi, opts)?;
    let mut found = vec![(first.s, first.value), (last.s, last.value)];
    let mut evaluations = 2;
    let mut exact = true;
    let mut stack = vec![(first, last)];
    while let Some((a, b)) = stack.pop() {
        if b.slope - a.slope <= 1e-12 {
            continue;
        }
        let c = (b.value - a.value + a.slope * a.s - b.slope * b.s) / (a.slope - b.slope);
        let tiny = 1e-9 * (1.0 + b.s.abs());
        if !(c > a.s + tiny && c < b.s - tiny) {
            continue;
        }
        if evaluations >= MAX_EVALUATIONS {
            exact = false;
            continue;
        }
        evaluations += 1;
        let mid = sample(instance, owner, c, opts)?;
        found.push((mid.s, mid.value));
        let tangent = a.value + a.slope * (c - a.s);
        if mid.value > tangent + 1e-8 * mid.value.abs().max(1.0) {
            stack.push((a, mid));
            stack.push((mid, b));
        }
    }
    found.sort_by(|x, y| x.0.total_cmp(&y.0));
    found.dedup_by(|next, prev| next.0 - prev.0 <= 1e-9 * (1.0 + prev.0.abs()));
    let (points, values) = found.into_iter().unzip();
    Ok(ValueFunction {
        owner,
        points,
        values,
        exact,
    })
}

/// Interpolation weights of one party inside a strengthened model.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightSet {
    pub share_var: usize,
    /// Column of `lambda_k`, one per breakpoint.
    pub weights: Vec<usize>,
    pub function: ValueFunction,
}

impl WeightSet {
    /// Sets the weights in `x` to interpolate the share already in it.
    pub fn lift(&self, x: &mut [f64]) {
        for &j in &self.weights {
            x[j] = 0.0;
        }
        let (k, theta) = self.function.segment(x[self.share_var]);
        if self.weights.len() == 1 {
            x[self.weights[0]] = 1.0;
            return;
        }
        x[self.weights[k]] = 1.0 - theta;
        x[self.weights[k + 1]] = theta;
    }

    /// How far the relaxed cost bound at `x` lies above the interpolant at
    /// the share, or `None` when the positive weights are adjacent.
    fn excess(&self, x: &[f64]) -> Option<f64> {
        let support: Vec<usize> = (0..self.weights.len())
            .filter(|&k| x[self.weights[k]] > WEIGHT_TOL)
            .collect();
        let (&a, &b) = (support.first()?, support.last()?);
        if b <= a + 1 {
            return None;
        }
        let relaxed: f64 = (a..=b)
            .map(|k| x[self.weights[k]] * self.function.values[k])
            .sum();
        let excess = relaxed - self.function.interpolate(x[self.share_var]);
        (excess > 1e-9 * self.function.scale().max(1.0)).then_some(excess)
    }

    /// Children keeping the weights at or below breakpoint `r`, and at or
    /// above it, for a split index strictly inside the current support.
    fn split(&self, x: &[f64]) -> [Vec<Fix>; 2] {
        let support: Vec<usize> = (0..self.weights.len())
            .filter(|&k| x[self.weights[k]] > WEIGHT_TOL)
            .collect();
        let (a, b) = (support[0], support[support.len() - 1]);
        let s = x[self.share_var];
        let p = &self.function.points;
        let r = (a + 1..b)
            .min_by(|&i, &j| (p[i] - s).abs().total_cmp(&(p[j] - s).abs()))
            .expect("support spans at least three breakpoints");
        let zero = |range: std::ops::Range<usize>| -> Vec<Fix> {
            range
                .map(|k| Fix::Var {
                    j: self.weights[k],
                    lo: 0.0,
                    hi: 0.0,
                })
                .collect()
        };
        let left = zero(r + 1..self.weights.len());
        let right = zero(0..r);
        if s <= p[r] {
            [left, right]
        } else {
            [right, left]
        }
    }
}

/// Picks the party whose relaxed cost bound is furthest from its value
/// function and splits its breakpoints.
pub(crate) fn weight_branch(sets: &[WeightSet], x: &[f64]) -> Option<[Vec<Fix>; 2]> {
    let (set, _) = sets
        .iter()
        .filter_map(|w| w.excess(x).map(|e| (w, e)))
        .max_by(|a, b| a.1.total_cmp(&b.1))?;
    Some(set.split(x))
}

/// Bilevel model with the value-function rows of every party appended.
/// The columns and rows of the source model keep their indices.
#[derive(Debug, Clone)]
pub struct StrengthenedModel {
    pub model: MpecModel,
    pub sets: Vec<WeightSet>,
    /// Number of columns of the source model.
    pub base_vars: usize,
}

impl StrengthenedModel {
    fn plain(mpec: &MpecModel) -> Self {
        StrengthenedModel {
            model: mpec.clone(),
            sets: Vec::new(),
            base_vars: mpec.lp.num_vars(),
        }
    }

    /// Extends a point of the source model with interpolation weights.
    pub fn lift(&self, base: &[f64]) -> Vec<f64> {
        let mut x = base.to_vec();
        x.resize(self.model.lp.num_vars(), 0.0);
        for set in &self.sets {
            set.lift(&mut x);
        }
        x
    }
}

/// The model the branching engines work on: `mpec` with value-function rows
/// when they are enabled and computable, `mpec` itself otherwise.
pub(crate) fn strengthened(mpec: &MpecModel, opts: &SolveOptions) -> StrengthenedModel {
    if opts.value_cuts {
        if let Ok(m) = with_value_cuts(mpec, opts) {
            return m;
        }
    }
    StrengthenedModel::plain(mpec)
}

pub fn with_value_cuts(mpec: &MpecModel, opts: &SolveOptions) -> Result<StrengthenedModel> {
    let mut out = StrengthenedModel::plain(mpec);
    let total = mpec.instance.storage.total_capacity;
    for block in &mpec.blocks {
        let var = &mpec.lp.vars[block.capacity_var];
        let lo = var.lower.max(0.0);
        let hi = var.upper.min(total).max(lo);
        let function = value_function(&mpec.instance, block.owner, lo, hi, opts)?;
        let lp = &mut out.model.lp;
        let weights: Vec<usize> = (0..function.points.len())
            .map(|k| {
                let name = format!("lambda_{}_{k}", block.owner);
                let role = VarRole::ValueWeight {
                    owner: block.owner,
                    k,
                };
                lp.add_var(Variable::bounded(name, 0.0, 1.0, role), 0.0)
            })
            .collect();
        let owner = block.owner;
        lp.add_eq(
            weights.iter().map(|&j| (j, 1.0)).collect(),
            1.0,
            RowTag::ValueWeights { owner },
        );
        let mut share: Vec<(usize, f64)> = vec![(block.capacity_var, 1.0)];
        share.extend(weights.iter().zip(&function.points).map(|(&j, &p)| (j, -p)));
        lp.add_eq(share, 0.0, RowTag::ValueShare { owner });

        // c x + offset <= sum v_k lambda_k
        let primal = &block.kkt.primal;
        let mut cut: Vec<(usize, f64)> = primal
            .objective
            .iter()
            .enumerate()
            .filter(|(_, c)| **c != 0.0)
            .map(|(j, &c)| (block.x_start + j, -c))
            .collect();
        cut.extend(weights.iter().zip(&function.values).map(|(&j, &v)| (j, v)));
        let slack = pin_slack(function.scale());
        lp.add_ge(cut, primal.objective_offset - slack, RowTag::ValueCut { owner });
        out.sets.push(WeightSet {
            share_var: block.capacity_var,
            weights,
            function,
        });
    }
    Ok(out)
}
