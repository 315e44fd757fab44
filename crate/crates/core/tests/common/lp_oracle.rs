//! Random feasible, bounded LPs and two checks that do not go through the
//! simplex code: brute-force vertex enumeration and a dual objective rebuilt
//! from the returned multipliers.

use ess_bilevel::lp::{LinearProgram, LpSolution, RowTag, VarRole, Variable};
use rand::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum BoundKind {
    Boxed,
    Lower,
    Upper,
    Free,
}

/// Feasible by construction (rows are built around a known point) and
/// bounded (the cost vector is a nonnegative combination of the rows plus a
/// reduced cost whose sign matches the finite bounds).
///
/// With `pointed` every variable has a finite lower bound, so the feasible
/// set has vertices.
pub fn random_lp(rng: &mut impl Rng, vars: usize, ge_rows: usize, eq_rows: usize, pointed: bool) -> LinearProgram {
    let integral = rng.random_bool(0.5);
    let x0: Vec<f64> = (0..vars).map(|_| rng.random_range(-3..=3) as f64).collect();
    let mut lp = LinearProgram::new();
    let mut kinds = Vec::with_capacity(vars);
    for (j, &x) in x0.iter().enumerate() {
        let kind = match rng.random_range(0..10) {
            0..=4 => BoundKind::Boxed,
            5..=6 => BoundKind::Lower,
            7..=8 if !pointed => BoundKind::Upper,
            7..=8 => BoundKind::Lower,
            _ if pointed => BoundKind::Boxed,
            _ => BoundKind::Free,
        };
        let (lo, hi) = match kind {
            BoundKind::Boxed => (x - gap(rng), x + gap(rng)),
            BoundKind::Lower => (x - gap(rng), f64::INFINITY),
            BoundKind::Upper => (f64::NEG_INFINITY, x + gap(rng)),
            BoundKind::Free => (f64::NEG_INFINITY, f64::INFINITY),
        };
        lp.add_var(Variable::bounded(format!("x{j}"), lo, hi, VarRole::Generic), 0.0);
        kinds.push(kind);
    }
    let dot = |e: &[(usize, f64)]| e.iter().map(|&(j, a)| a * x0[j]).sum::<f64>();
    let mut cost = vec![0.0; vars];
    for _ in 0..ge_rows {
        let e = random_row(rng, vars, integral);
        let slack = if rng.random_bool(0.4) { 0.0 } else { rng.random_range(0..=3) as f64 };
        let y = if rng.random_bool(0.3) { 0.0 } else { rng.random_range(0.0..2.0) };
        for &(j, a) in &e {
            cost[j] += y * a;
        }
        lp.add_ge(e.clone(), dot(&e) - slack, RowTag::Generic);
    }
    for _ in 0..eq_rows {
        let e = random_row(rng, vars, integral);
        let z = rng.random_range(-2.0..2.0);
        for &(j, a) in &e {
            cost[j] += z * a;
        }
        lp.add_eq(e.clone(), dot(&e), RowTag::Generic);
    }
    for (j, kind) in kinds.iter().enumerate() {
        cost[j] += match kind {
            BoundKind::Boxed => rng.random_range(-2.0..2.0),
            BoundKind::Lower => rng.random_range(0.0..2.0),
            BoundKind::Upper => -rng.random_range(0.0..2.0),
            BoundKind::Free => 0.0,
        };
    }
    lp.objective = cost;
    lp.objective_offset = rng.random_range(-1.0..1.0);
    lp
}

// a third of the finite bounds pass through the anchor point
fn gap(rng: &mut impl Rng) -> f64 {
    if rng.random_bool(0.3) {
        0.0
    } else {
        rng.random_range(1..=4) as f64
    }
}

fn random_row(rng: &mut impl Rng, vars: usize, integral: bool) -> Vec<(usize, f64)> {
    let mut entries: Vec<(usize, f64)> = Vec::new();
    for j in 0..vars {
        if rng.random_bool(0.5) {
            let a = if integral {
                rng.random_range(-5..=5) as f64
            } else {
                rng.random_range(-5.0..5.0)
            };
            if a != 0.0 {
                entries.push((j, a));
            }
        }
    }
    if entries.is_empty() {
        entries.push((rng.random_range(0..vars), 1.0));
    }
    entries
}

/// Solves a square system by Gaussian elimination with partial pivoting;
/// `None` when it is (numerically) singular.
pub fn solve_dense(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n).max_by(|&p, &q| a[p][col].abs().total_cmp(&a[q][col].abs()))?;
        if a[pivot][col].abs() < 1e-9 {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for r in col + 1..n {
            let f = a[r][col] / a[col][col];
            if f != 0.0 {
                for k in col..n {
                    a[r][k] -= f * a[col][k];
                }
                b[r] -= f * b[col];
            }
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|k| a[r][k] * x[k]).sum();
        x[r] = (b[r] - s) / a[r][r];
    }
    Some(x)
}

fn dense(entries: &[(usize, f64)], n: usize) -> Vec<f64> {
    let mut out = vec![0.0; n];
    for &(j, a) in entries {
        out[j] = a;
    }
    out
}

/// Largest violation of the rows and bounds of `lp` at `x`.
pub fn primal_violation(lp: &LinearProgram, x: &[f64]) -> f64 {
    let mut worst = 0.0f64;
    for c in &lp.inequalities {
        worst = worst.max(c.rhs - c.row.dot(x));
    }
    for c in &lp.equalities {
        worst = worst.max((c.row.dot(x) - c.rhs).abs());
    }
    for (v, &xj) in lp.vars.iter().zip(x) {
        worst = worst.max(v.lower - xj).max(xj - v.upper);
    }
    worst
}

/// Minimum over all vertices of the feasible set, or `None` if there is no
/// vertex. Every combination of active rows and bounds is tried, so keep the
/// model small.
pub fn vertex_minimum(lp: &LinearProgram) -> Option<(f64, Vec<f64>)> {
    let n = lp.num_vars();
    let mut candidates: Vec<(Vec<f64>, f64)> = lp
        .inequalities
        .iter()
        .map(|c| (dense(c.row.entries(), n), c.rhs))
        .collect();
    for (j, v) in lp.vars.iter().enumerate() {
        let mut unit = vec![0.0; n];
        unit[j] = 1.0;
        if v.lower.is_finite() {
            candidates.push((unit.clone(), v.lower));
        }
        if v.upper.is_finite() {
            candidates.push((unit, v.upper));
        }
    }
    // equalities join the pool rather than being forced active, so dependent
    // equality rows do not make every system singular; feasibility still
    // enforces them
    candidates.extend(lp.equalities.iter().map(|c| (dense(c.row.entries(), n), c.rhs)));
    let choose = n;
    if choose > candidates.len() {
        return None;
    }
    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut pick: Vec<usize> = (0..choose).collect();
    loop {
        let (a, b): (Vec<_>, Vec<_>) = pick.iter().map(|&k| candidates[k].clone()).unzip();
        if let Some(x) = solve_dense(a, b) {
            let scale = x.iter().fold(1.0f64, |m, v| m.max(v.abs()));
            if primal_violation(lp, &x) <= 1e-9 * scale {
                let obj = lp.objective_value(&x);
                if best.as_ref().is_none_or(|(o, _)| obj < *o) {
                    best = Some((obj, x));
                }
            }
        }
        // next combination in lexicographic order
        let mut i = choose;
        loop {
            if i == 0 {
                return best;
            }
            i -= 1;
            if pick[i] < candidates.len() - choose + i {
                break;
            }
        }
        pick[i] += 1;
        for k in i + 1..choose {
            pick[k] = pick[k - 1] + 1;
        }
    }
}

/// Dual objective rebuilt from the row multipliers of `sol`. Fails when the
/// multipliers are not dual feasible at `tol`.
pub fn dual_objective(lp: &LinearProgram, sol: &LpSolution, tol: f64) -> Result<f64, String> {
    let n = lp.num_vars();
    if sol.omega.len() != lp.inequalities.len() || sol.v.len() != lp.equalities.len() {
        return Err("multiplier vectors have the wrong length".into());
    }
    if let Some((i, w)) = sol.omega.iter().enumerate().find(|(_, w)| **w < -tol) {
        return Err(format!("inequality multiplier {i} is negative ({w})"));
    }
    let mut reduced = lp.objective.clone();
    for (c, w) in lp.inequalities.iter().zip(&sol.omega) {
        for &(j, a) in c.row.entries() {
            reduced[j] -= a * w;
        }
    }
    for (c, v) in lp.equalities.iter().zip(&sol.v) {
        for &(j, a) in c.row.entries() {
            reduced[j] -= a * v;
        }
    }
    let mut value = lp.objective_offset;
    value += lp.inequalities.iter().zip(&sol.omega).map(|(c, w)| c.rhs * w).sum::<f64>();
    value += lp.equalities.iter().zip(&sol.v).map(|(c, v)| c.rhs * v).sum::<f64>();
    for j in 0..n {
        let (lo, hi, d) = (lp.vars[j].lower, lp.vars[j].upper, reduced[j]);
        if d > tol {
            if !lo.is_finite() {
                return Err(format!("column {j} has reduced cost {d} but no lower bound"));
            }
            value += d * lo;
        } else if d < -tol {
            if !hi.is_finite() {
                return Err(format!("column {j} has reduced cost {d} but no upper bound"));
            }
            value += d * hi;
        } else if d != 0.0 {
            // within tolerance: charge it to whichever bound exists
            value += d * if lo.is_finite() { lo } else if hi.is_finite() { hi } else { 0.0 };
        }
    }
    Ok(value)
}

/// Beale's example, which cycles under the textbook pivoting rule; the
/// optimum is -5/4.
pub fn beale() -> LinearProgram {
    let mut lp = LinearProgram::new();
    for (j, c) in [-0.75, 20.0, -0.5, 6.0].into_iter().enumerate() {
        lp.add_var(Variable::bounded(format!("x{}", j + 4), 0.0, f64::INFINITY, VarRole::Generic), c);
    }
    lp.add_ge(vec![(0, -0.25), (1, 8.0), (2, 1.0), (3, -9.0)], 0.0, RowTag::Generic);
    lp.add_ge(vec![(0, -0.5), (1, 12.0), (2, 0.5), (3, -3.0)], 0.0, RowTag::Generic);
    lp.add_ge(vec![(2, -1.0)], -1.0, RowTag::Generic);
    lp
}
