//! Bounded-variable primal simplex on a dense explicit basis inverse.
//!
//! Every row gets one logical column: a surplus `s >= 0` for inequality rows
//! (`A x - s = b`) and a pinned artificial in `[0, 0]` for equality rows. The
//! all-logical basis is therefore always available, and a basis that became
//! primal infeasible after bound changes is repaired by minimising the sum of
//! infeasibilities (phase 1) before optimising the true costs (phase 2). That
//! is what lets branch-and-bound re-solve children from the parent's basis.
//!
//! Pricing is Dantzig (most negative reduced cost, lowest index on ties).
//! After `DEGENERACY_STREAK` consecutive degenerate pivots the lowest-index
//! rule takes over for both entering and leaving choices until the objective
//! moves again.

use crate::lp::{LinearProgram, LpSolution, LpStatus};

use super::SolveOptions;

const PIVOT_TOL: f64 = 1e-9;
const PRIMAL_TOL: f64 = 1e-9;
const DUAL_TOL: f64 = 1e-9;
const DEGENERATE_STEP: f64 = 1e-12;
const DEGENERACY_STREAK: usize = 50;
const REFACTOR_INTERVAL: usize = 80;
const SINGULAR_TOL: f64 = 1e-11;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Rest {
    Lower,
    Upper,
    /// Free nonbasic variable parked at zero.
    Zero,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum State {
    Basic(usize),
    NonBasic(Rest),
}

/// Basis snapshot that can be restored into an engine built from the same
/// program.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Basis {
    basic: Vec<usize>,
    at_upper: Vec<bool>,
}

/// Reusable simplex state over one fixed coefficient matrix. Bounds may be
/// changed between solves.
#[derive(Debug, Clone)]
pub struct SimplexEngine {
    rows: usize,
    structural: usize,
    ineq_rows: usize,
    cols: Vec<Vec<(usize, f64)>>,
    lo: Vec<f64>,
    hi: Vec<f64>,
    cost: Vec<f64>,
    offset: f64,
    rhs: Vec<f64>,
    basis: Vec<usize>,
    state: Vec<State>,
    x: Vec<f64>,
    binv: Vec<f64>,
    since_refactor: usize,
    values_stale: bool,
    pub iterations: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Phase {
    One,
    Two,
}

impl SimplexEngine {
    pub fn new(lp: &LinearProgram) -> Self {
        let n = lp.num_vars();
        let mg = lp.inequalities.len();
        let m = mg + lp.equalities.len();
        let mut cols: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        for (i, c) in lp.inequalities.iter().chain(&lp.equalities).enumerate() {
            for &(j, v) in c.row.entries() {
                cols[j].push((i, v));
            }
        }
        let mut lo: Vec<f64> = lp.vars.iter().map(|v| v.lower).collect();
        let mut hi: Vec<f64> = lp.vars.iter().map(|v| v.upper).collect();
        let mut cost = lp.objective.clone();
        let rhs: Vec<f64> = lp
            .inequalities
            .iter()
            .chain(&lp.equalities)
            .map(|c| c.rhs)
            .collect();
        for i in 0..m {
            lo.push(0.0);
            hi.push(if i < mg { f64::INFINITY } else { 0.0 });
            cost.push(0.0);
        }
        let mut engine = SimplexEngine {
            rows: m,
            structural: n,
            ineq_rows: mg,
            cols,
            lo,
            hi,
            cost,
            offset: lp.objective_offset,
            rhs,
            basis: Vec::new(),
            state: Vec::new(),
            x: vec![0.0; n + m],
            binv: Vec::new(),
            since_refactor: 0,
            values_stale: true,
            iterations: 0,
        };
        engine.reset_basis();
        engine
    }

    fn logical_sign(&self, row: usize) -> f64 {
        if row < self.ineq_rows {
            -1.0
        } else {
            1.0
        }
    }

    fn rest_for(&self, j: usize, prefer: Option<Rest>) -> Rest {
        let (l, h) = (self.lo[j], self.hi[j]);
        match prefer {
            Some(Rest::Upper) if h.is_finite() => Rest::Upper,
            Some(Rest::Lower) if l.is_finite() => Rest::Lower,
            _ if l.is_finite() => Rest::Lower,
            _ if h.is_finite() => Rest::Upper,
            _ => Rest::Zero,
        }
    }

    fn rest_value(&self, j: usize, rest: Rest) -> f64 {
        match rest {
            Rest::Lower => self.lo[j],
            Rest::Upper => self.hi[j],
            Rest::Zero => 0.0,
        }
    }

    /// Back to the all-logical basis.
    pub fn reset_basis(&mut self) {
        let (n, m) = (self.structural, self.rows);
        self.state = Vec::with_capacity(n + m);
        for j in 0..n {
            let rest = self.rest_for(j, None);
            self.state.push(State::NonBasic(rest));
            self.x[j] = self.rest_value(j, rest);
        }
        self.basis = (0..m).map(|i| n + i).collect();
        for i in 0..m {
            self.state.push(State::Basic(i));
        }
        self.binv = vec![0.0; m * m];
        for i in 0..m {
            self.binv[i * m + i] = self.logical_sign(i);
        }
        self.since_refactor = 0;
        self.values_stale = true;
    }

    pub fn snapshot(&self) -> Basis {
        Basis {
            basic: self.basis.clone(),
            at_upper: self
                .state
                .iter()
                .map(|s| matches!(s, State::NonBasic(Rest::Upper)))
                .collect(),
        }
    }

    pub fn restore(&mut self, basis: &Basis) {
        let total = self.structural + self.rows;
        assert_eq!(basis.at_upper.len(), total, "basis from another program");
        for j in 0..total {
            let prefer = if basis.at_upper[j] {
                Rest::Upper
            } else {
                Rest::Lower
            };
            let rest = self.rest_for(j, Some(prefer));
            self.state[j] = State::NonBasic(rest);
            self.x[j] = self.rest_value(j, rest);
        }
        self.basis = basis.basic.clone();
        for (pos, &j) in self.basis.iter().enumerate() {
            self.state[j] = State::Basic(pos);
        }
        self.refactor();
    }

    pub fn var_bounds(&self, j: usize) -> (f64, f64) {
        (self.lo[j], self.hi[j])
    }

    pub fn set_var_bounds(&mut self, j: usize, lo: f64, hi: f64) {
        self.set_bounds(j, lo, hi);
    }

    /// Bounds on the surplus of inequality row `row`; `[0, 0]` makes it tight.
    pub fn set_surplus_bounds(&mut self, row: usize, lo: f64, hi: f64) {
        debug_assert!(row < self.ineq_rows);
        self.set_bounds(self.structural + row, lo, hi);
    }

    pub fn surplus_bounds(&self, row: usize) -> (f64, f64) {
        let j = self.structural + row;
        (self.lo[j], self.hi[j])
    }

    fn set_bounds(&mut self, j: usize, lo: f64, hi: f64) {
        self.lo[j] = lo;
        self.hi[j] = hi;
        if let State::NonBasic(rest) = self.state[j] {
            let rest = self.rest_for(j, Some(rest));
            self.state[j] = State::NonBasic(rest);
            self.x[j] = self.rest_value(j, rest);
        }
        self.values_stale = true;
    }

    fn column(&self, j: usize) -> ColumnIter<'_> {
        if j < self.structural {
            ColumnIter::Structural(self.cols[j].iter())
        } else {
            let row = j - self.structural;
            ColumnIter::Logical(Some((row, self.logical_sign(row))))
        }
    }

    /// Rebuilds the basis inverse from scratch. Columns that turn out to be
    /// dependent are swapped for logicals of uncovered rows.
    fn refactor(&mut self) {
        let m = self.rows;
        loop {
            let mut work = vec![0.0; m * m];
            for (pos, &j) in self.basis.iter().enumerate() {
                for (i, v) in self.column(j) {
                    work[i * m + pos] = v;
                }
            }
            match invert(&mut work, m) {
                Ok(inv) => {
                    self.binv = inv;
                    break;
                }
                Err((bad_positions, free_rows)) => {
                    for (pos, row) in bad_positions.into_iter().zip(free_rows) {
                        let out = self.basis[pos];
                        let rest = self.rest_for(out, None);
                        self.state[out] = State::NonBasic(rest);
                        self.x[out] = self.rest_value(out, rest);
                        let logical = self.structural + row;
                        self.basis[pos] = logical;
                        self.state[logical] = State::Basic(pos);
                    }
                }
            }
        }
        self.since_refactor = 0;
        self.values_stale = true;
    }

    fn recompute_basic_values(&mut self) {
        let m = self.rows;
        let mut r = self.rhs.clone();
        for j in 0..self.structural + m {
            if let State::NonBasic(_) = self.state[j] {
                let v = self.x[j];
                if v != 0.0 {
                    for (i, a) in self.column(j) {
                        r[i] -= a * v;
                    }
                }
            }
        }
        for pos in 0..m {
            let row = &self.binv[pos * m..(pos + 1) * m];
            let val: f64 = row.iter().zip(&r).map(|(b, v)| b * v).sum();
            self.x[self.basis[pos]] = val;
        }
        self.values_stale = false;
    }

    fn infeasibility(&self, j: usize) -> f64 {
        let v = self.x[j];
        if v < self.lo[j] {
            self.lo[j] - v
        } else if v > self.hi[j] {
            v - self.hi[j]
        } else {
            0.0
        }
    }

    fn row_duals(&self, basic_costs: &[f64]) -> Vec<f64> {
        let m = self.rows;
        let mut y = vec![0.0; m];
        for (pos, &c) in basic_costs.iter().enumerate() {
            if c != 0.0 {
                let row = &self.binv[pos * m..(pos + 1) * m];
                for (yi, b) in y.iter_mut().zip(row) {
                    *yi += c * b;
                }
            }
        }
        y
    }

    fn reduced_cost(&self, j: usize, cj: f64, y: &[f64]) -> f64 {
        cj - self.column(j).map(|(i, a)| y[i] * a).sum::<f64>()
    }

    fn ftran(&self, j: usize) -> Vec<f64> {
        let m = self.rows;
        let mut alpha = vec![0.0; m];
        for (i, a) in self.column(j) {
            for (pos, out) in alpha.iter_mut().enumerate() {
                *out += self.binv[pos * m + i] * a;
            }
        }
        alpha
    }

    fn pivot_inverse(&mut self, r: usize, alpha: &[f64]) {
        let m = self.rows;
        let piv = alpha[r];
        let (before, rest) = self.binv.split_at_mut(r * m);
        let (prow, after) = rest.split_at_mut(m);
        for v in prow.iter_mut() {
            *v /= piv;
        }
        for (pos, chunk) in before.chunks_mut(m).enumerate() {
            let f = alpha[pos];
            if f != 0.0 {
                for (v, p) in chunk.iter_mut().zip(prow.iter()) {
                    *v -= f * p;
                }
            }
        }
        for (k, chunk) in after.chunks_mut(m).enumerate() {
            let f = alpha[r + 1 + k];
            if f != 0.0 {
                for (v, p) in chunk.iter_mut().zip(prow.iter()) {
                    *v -= f * p;
                }
            }
        }
    }

    /// Runs phase 1 / phase 2 from the current basis.
    pub fn solve(&mut self, opts: &SolveOptions) -> LpStatus {
        let m = self.rows;
        let total = self.structural + m;
        let max_iter = opts
            .max_lp_iterations
            .unwrap_or(20 * (total + m) + 10_000);
        let mut iter = 0usize;
        let mut streak = 0usize;
        let mut verified_once = false;
        if self.values_stale {
            self.recompute_basic_values();
        }

        loop {
            if iter >= max_iter {
                self.iterations += iter;
                return LpStatus::IterationLimit;
            }
            if self.since_refactor >= REFACTOR_INTERVAL {
                self.refactor();
                self.recompute_basic_values();
            }

            let mut phase = Phase::Two;
            let mut cb = vec![0.0; m];
            for pos in 0..m {
                let j = self.basis[pos];
                let v = self.x[j];
                if v < self.lo[j] - PRIMAL_TOL {
                    cb[pos] = -1.0;
                    phase = Phase::One;
                } else if v > self.hi[j] + PRIMAL_TOL {
                    cb[pos] = 1.0;
                    phase = Phase::One;
                }
            }
            if phase == Phase::Two {
                for pos in 0..m {
                    cb[pos] = self.cost[self.basis[pos]];
                }
            }
            let y = self.row_duals(&cb);

            let bland = opts.anti_cycling && streak >= DEGENERACY_STREAK;
            let mut entering: Option<(usize, f64)> = None;
            for j in 0..total {
                let State::NonBasic(rest) = self.state[j] else {
                    continue;
                };
                if self.lo[j] == self.hi[j] {
                    continue;
                }
                let cj = if phase == Phase::One { 0.0 } else { self.cost[j] };
                let d = self.reduced_cost(j, cj, &y);
                let eligible = match rest {
                    Rest::Lower => d < -DUAL_TOL,
                    Rest::Upper => d > DUAL_TOL,
                    Rest::Zero => d.abs() > DUAL_TOL,
                };
                if !eligible {
                    continue;
                }
                if bland {
                    entering = Some((j, d));
                    break;
                }
                match entering {
                    Some((_, best)) if d.abs() <= best.abs() => {}
                    _ => entering = Some((j, d)),
                }
            }

            let Some((q, dq)) = entering else {
                match phase {
                    Phase::One => {
                        let infeas: f64 = self.basis.iter().map(|&j| self.infeasibility(j)).sum();
                        self.iterations += iter;
                        if infeas > opts.feasibility_tol {
                            return LpStatus::Infeasible;
                        }
                        // residual infeasibility below tolerance: accept
                        return LpStatus::Optimal;
                    }
                    Phase::Two => {
                        if !verified_once {
                            verified_once = true;
                            self.refactor();
                            self.recompute_basic_values();
                            continue;
                        }
                        self.iterations += iter;
                        return LpStatus::Optimal;
                    }
                }
            };
            iter += 1;

            let dir = if dq < 0.0 { 1.0 } else { -1.0 };
            let alpha = self.ftran(q);

            // ratio test
            let mut theta = f64::INFINITY;
            let mut leave: Option<(usize, Rest)> = None;
            let mut leave_mag = 0.0;
            for pos in 0..m {
                let a = alpha[pos];
                if a.abs() <= PIVOT_TOL {
                    continue;
                }
                let j = self.basis[pos];
                let rate = -dir * a;
                let v = self.x[j];
                let (l, h) = (self.lo[j], self.hi[j]);
                let limit = if rate < 0.0 {
                    if v > h + PRIMAL_TOL {
                        Some(((v - h) / -rate, Rest::Upper))
                    } else if v < l - PRIMAL_TOL {
                        match phase {
                            Phase::One => None,
                            Phase::Two => Some((0.0, Rest::Lower)),
                        }
                    } else if l.is_finite() {
                        Some(((v - l).max(0.0) / -rate, Rest::Lower))
                    } else {
                        None
                    }
                } else if v < l - PRIMAL_TOL {
                    Some(((l - v) / rate, Rest::Lower))
                } else if v > h + PRIMAL_TOL {
                    match phase {
                        Phase::One => None,
                        Phase::Two => Some((0.0, Rest::Upper)),
                    }
                } else if h.is_finite() {
                    Some(((h - v).max(0.0) / rate, Rest::Upper))
                } else {
                    None
                };
                let Some((t, rest)) = limit else { continue };
                let better = if t < theta - DEGENERATE_STEP {
                    true
                } else if t <= theta + DEGENERATE_STEP {
                    match leave {
                        None => true,
                        Some((cur, _)) => {
                            if bland {
                                j < self.basis[cur]
                            } else {
                                a.abs() > leave_mag
                            }
                        }
                    }
                } else {
                    false
                };
                if better {
                    theta = theta.min(t);
                    leave = Some((pos, rest));
                    leave_mag = a.abs();
                }
            }

            let range = self.hi[q] - self.lo[q];
            let flip = range.is_finite() && range <= theta;
            if flip {
                theta = range;
            }
            if !flip && leave.is_none() {
                self.iterations += iter;
                return match phase {
                    Phase::Two => LpStatus::Unbounded,
                    Phase::One => LpStatus::NumericalFailure,
                };
            }

            if theta <= DEGENERATE_STEP {
                streak += 1;
            } else {
                streak = 0;
            }

            for pos in 0..m {
                if alpha[pos] != 0.0 {
                    let j = self.basis[pos];
                    self.x[j] -= dir * theta * alpha[pos];
                }
            }
            if flip {
                let rest = if dir > 0.0 { Rest::Upper } else { Rest::Lower };
                self.state[q] = State::NonBasic(rest);
                self.x[q] = self.rest_value(q, rest);
                continue;
            }
            let (r, rest) = leave.expect("checked above");
            let out = self.basis[r];
            let entering_value = self.x[q] + dir * theta;
            self.state[out] = State::NonBasic(rest);
            self.x[out] = self.rest_value(out, rest);
            self.basis[r] = q;
            self.state[q] = State::Basic(r);
            self.x[q] = entering_value;
            self.pivot_inverse(r, &alpha);
            self.since_refactor += 1;
        }
    }

    /// Extracts primal values, row multipliers and reduced costs.
    pub fn solution(&self, status: LpStatus) -> LpSolution {
        let n = self.structural;
        let m = self.rows;
        let x = self.x[..n].to_vec();
        let cb: Vec<f64> = self.basis.iter().map(|&j| self.cost[j]).collect();
        let y = self.row_duals(&cb);
        let reduced_costs = (0..n).map(|j| self.reduced_cost(j, self.cost[j], &y)).collect();
        let objective = self.offset + self.cost[..n].iter().zip(&x).map(|(c, v)| c * v).sum::<f64>();
        LpSolution {
            status,
            x,
            omega: y[..self.ineq_rows].to_vec(),
            v: y[self.ineq_rows..m].to_vec(),
            reduced_costs,
            objective,
            iterations: self.iterations,
        }
    }

    /// Current surplus of inequality row `row`.
    pub fn surplus(&self, row: usize) -> f64 {
        self.x[self.structural + row]
    }

    pub fn value(&self, j: usize) -> f64 {
        self.x[j]
    }

    pub fn objective(&self) -> f64 {
        self.offset
            + self.cost[..self.structural]
                .iter()
                .zip(&self.x)
                .map(|(c, v)| c * v)
                .sum::<f64>()
    }
}

enum ColumnIter<'a> {
    Structural(std::slice::Iter<'a, (usize, f64)>),
    Logical(Option<(usize, f64)>),
}

impl Iterator for ColumnIter<'_> {
    type Item = (usize, f64);
    fn next(&mut self) -> Option<(usize, f64)> {
        match self {
            ColumnIter::Structural(it) => it.next().copied(),
            ColumnIter::Logical(item) => item.take(),
        }
    }
}

/// Gauss-Jordan inversion with partial pivoting of a row-major `m x m`
/// matrix. On failure returns the dependent column positions and rows that
/// received no pivot, paired up one-to-one.
fn invert(a: &mut [f64], m: usize) -> Result<Vec<f64>, (Vec<usize>, Vec<usize>)> {
    let mut inv = vec![0.0; m * m];
    for i in 0..m {
        inv[i * m + i] = 1.0;
    }
    let mut pivot_row_of_col = vec![usize::MAX; m];
    let mut row_used = vec![false; m];
    let mut bad = Vec::new();
    for col in 0..m {
        let mut best = None;
        let mut best_mag = SINGULAR_TOL;
        for r in 0..m {
            if !row_used[r] {
                let mag = a[r * m + col].abs();
                if mag > best_mag {
                    best_mag = mag;
                    best = Some(r);
                }
            }
        }
        let Some(r) = best else {
            bad.push(col);
            continue;
        };
        row_used[r] = true;
        pivot_row_of_col[col] = r;
        let p = a[r * m + col];
        for k in 0..m {
            a[r * m + k] /= p;
            inv[r * m + k] /= p;
        }
        for i in 0..m {
            if i == r {
                continue;
            }
            let f = a[i * m + col];
            if f != 0.0 {
                for k in 0..m {
                    a[i * m + k] -= f * a[r * m + k];
                    inv[i * m + k] -= f * inv[r * m + k];
                }
            }
        }
    }
    if !bad.is_empty() {
        let free_rows: Vec<usize> = (0..m).filter(|&r| !row_used[r]).collect();
        return Err((bad, free_rows));
    }
    // rows of `inv` are indexed by pivot row; reorder so row `col` of the
    // inverse belongs to basis position `col`
    let mut out = vec![0.0; m * m];
    for col in 0..m {
        let r = pivot_row_of_col[col];
        out[col * m..(col + 1) * m].copy_from_slice(&inv[r * m..(r + 1) * m]);
    }
    Ok(out)
}

/// Solves `lp` from the all-logical basis.
pub fn solve_lp(lp: &LinearProgram, opts: &SolveOptions) -> LpSolution {
    let mut engine = SimplexEngine::new(lp);
    let status = engine.solve(opts);
    engine.solution(status)
}
