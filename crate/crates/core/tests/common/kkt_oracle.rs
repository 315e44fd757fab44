//! KKT checks written against the primal data rather than the derived rows,
//! and an exhaustive search over all points of a derived KKT system.

use ess_bilevel::lp::{LinearProgram, RowTag, VarRole, Variable};
use ess_bilevel::mpec::{KktSystem, MilpModel};
use ess_bilevel::lp::LpStatus;
use ess_bilevel::solver::{solve_lp, solve_milp, SolveOptions, SolveStatus};

/// Worst residual of stationarity, dual sign, primal feasibility and
/// complementarity of `(x, omega, v)` for the rows of `kkt.primal`.
/// Stationarity is recomputed column by column from the primal matrix.
pub fn kkt_residual(kkt: &KktSystem, x: &[f64], omega: &[f64], v: &[f64]) -> f64 {
    let lp = &kkt.primal;
    let mut grad = lp.objective.clone();
    for (c, w) in lp.inequalities.iter().zip(omega) {
        for &(j, a) in c.row.entries() {
            grad[j] -= a * w;
        }
    }
    for (c, m) in lp.equalities.iter().zip(v) {
        for &(j, a) in c.row.entries() {
            grad[j] -= a * m;
        }
    }
    let mut worst = grad.iter().fold(0.0f64, |m, g| m.max(g.abs()));
    for (c, &w) in lp.inequalities.iter().zip(omega) {
        let slack = c.row.dot(x) - c.rhs;
        worst = worst.max(-w).max(-slack).max((w * slack).abs());
    }
    for c in &lp.equalities {
        worst = worst.max((c.row.dot(x) - c.rhs).abs());
    }
    worst
}

/// Smallest and largest objective over every point satisfying the derived
/// system: primal rows, derived stationarity rows, nonnegative multipliers,
/// and complementarity through 0-1 selectors with constant `m`.
///
/// Multipliers of degenerate rows can be arbitrarily large, so a solution
/// may press against the constant. The search is then repeated with a
/// constant ten times larger and must give the same range; otherwise
/// the range may be truncated and this errors.
pub fn kkt_objective_range(kkt: &KktSystem, m: f64) -> Result<(f64, f64), String> {
    let (range, reached) = range_with(kkt, m)?;
    if !reached {
        return Ok(range);
    }
    let (wider, _) = range_with(kkt, 10.0 * m)?;
    let same = |a: f64, b: f64| (a - b).abs() <= 1e-9 * b.abs().max(1.0);
    if same(range.0, wider.0) && same(range.1, wider.1) {
        Ok(wider)
    } else {
        Err(format!("range {range:?} grows to {wider:?} with a larger constant"))
    }
}

/// Largest slack of each inequality row over the primal feasible set,
/// `None` where it is unbounded.
fn max_slacks(primal: &LinearProgram) -> Result<Vec<Option<f64>>, String> {
    primal
        .inequalities
        .iter()
        .map(|c| {
            let mut lp = primal.clone();
            lp.objective_offset = 0.0;
            lp.objective.iter_mut().for_each(|v| *v = 0.0);
            for &(j, a) in c.row.entries() {
                lp.objective[j] = -a;
            }
            let sol = solve_lp(&lp, &SolveOptions::default());
            match sol.status {
                LpStatus::Optimal => Ok(Some((-sol.objective - c.rhs).max(0.0))),
                LpStatus::Unbounded => Ok(None),
                s => Err(format!("slack bound ended {s:?}")),
            }
        })
        .collect()
}

fn range_with(kkt: &KktSystem, m: f64) -> Result<((f64, f64), bool), String> {
    let primal = &kkt.primal;
    // Slack-side constants are capped by the largest slack a feasible point
    // can have. Rows that are tight everywhere satisfy complementarity for
    // any multiplier, so their selectors are fixed.
    let slack_cap = max_slacks(primal)?;
    let n = primal.num_vars();
    let pairs = kkt.num_pairs();
    let mut lp = LinearProgram::new();
    for var in &primal.vars {
        lp.add_var(var.clone(), 0.0);
    }
    let omega0 = lp.num_vars();
    for i in 0..pairs {
        lp.add_var(Variable::bounded(format!("w{i}"), 0.0, m, VarRole::Generic), 0.0);
    }
    let v0 = lp.num_vars();
    for i in 0..primal.equalities.len() {
        lp.add_var(Variable::free(format!("v{i}"), VarRole::Generic), 0.0);
    }
    let u0 = lp.num_vars();
    for (i, cap) in slack_cap.iter().enumerate() {
        let lower = if cap.is_some_and(|s| s <= 1e-9) { 1.0 } else { 0.0 };
        lp.add_var(Variable::bounded(format!("u{i}"), lower, 1.0, VarRole::Generic), 0.0);
    }
    for c in &primal.inequalities {
        lp.add_ge(c.row.entries().to_vec(), c.rhs, RowTag::Generic);
    }
    for c in &primal.equalities {
        lp.add_eq(c.row.entries().to_vec(), c.rhs, RowTag::Generic);
    }
    for row in &kkt.stationarity {
        let mut entries: Vec<(usize, f64)> = row.omega.entries().iter().map(|&(i, a)| (omega0 + i, a)).collect();
        entries.extend(row.v.entries().iter().map(|&(i, a)| (v0 + i, a)));
        lp.add_eq(entries, row.cost, RowTag::Generic);
    }
    for (i, c) in primal.inequalities.iter().enumerate() {
        // omega_i <= m u_i and slack_i <= ms (1 - u_i)
        let ms = slack_cap[i].map_or(m, |s| s.min(m));
        lp.add_ge(vec![(omega0 + i, -1.0), (u0 + i, m)], 0.0, RowTag::Generic);
        let mut entries: Vec<(usize, f64)> = c.row.entries().iter().map(|&(j, a)| (j, -a)).collect();
        entries.push((u0 + i, -ms));
        lp.add_ge(entries, -c.rhs - ms, RowTag::Generic);
    }
    let binaries: Vec<usize> = (u0..u0 + pairs).collect();
    let opts = SolveOptions {
        value_cuts: false,
        ..SolveOptions::default()
    };
    let mut range = [0.0; 2];
    let mut reached = false;
    for (k, sign) in [1.0, -1.0].into_iter().enumerate() {
        let mut model = lp.clone();
        for j in 0..n {
            model.objective[j] = sign * primal.objective[j];
        }
        let milp = MilpModel::new(model, binaries.clone()).map_err(|e| e.to_string())?;
        let res = solve_milp(&milp, &opts);
        if res.status != SolveStatus::Optimal {
            return Err(format!("selector search ended {:?}", res.status));
        }
        let z = res.incumbent.expect("optimal search has an incumbent");
        for (i, c) in primal.inequalities.iter().enumerate() {
            let slack = c.row.dot(&z[..n]) - c.rhs;
            reached |= z[omega0 + i] > 0.5 * m || slack > 0.5 * m;
        }
        range[k] = primal.objective_value(&z[..n]);
    }
    Ok(((range[0], range[1]), reached))
}
